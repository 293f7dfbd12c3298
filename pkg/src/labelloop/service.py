"""HTTP annotation service: exposes each cycle's candidates to a human
oracle and feeds the labels back into the loop at commit.

The service never mutates pools or model state; it fills the current cycle's
label set, which the orchestrator applies atomically after commit. Handlers
run on server threads against a single lock-protected store; the orchestrator
blocks inside HumanOracle.annotate until the cycle is committed.
"""

from __future__ import annotations

import io
import threading
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles

from .data import Dataset
from .oracles import AnnotationRequest, OracleAbort

STATE_TRAINING = "training"
STATE_AWAITING = "awaiting_labels"
STATE_DONE = "done"


@dataclass
class AnnotationTask:
    request: AnnotationRequest
    status: str = "pending"  # pending | labeled
    assigned_label: int | None = None

    def to_json(self) -> dict:
        r = self.request
        return {
            "id": r.sample_id,
            "cycle": r.cycle,
            "probs": r.probs,
            "predicted_class": r.predicted_class,
            "unified_rank": r.unified_rank,
            "features": r.features,
            "has_image": r.has_image,
            "image_url": (f"/api/candidates/{r.sample_id}/image"
                          if r.has_image else None),
            "aus_variance": r.aus_variance,
            "aus_perturbed_class": r.aus_perturbed_class,
            "bus_entropy": r.bus_entropy,
            "bus_density": r.bus_density,
            "bus_weighted": r.bus_weighted,
            "neighbor_points": r.neighbor_points,
            "status": self.status,
            "assigned_label": self.assigned_label,
        }


class AnnotationStore:
    """Synchronized bridge between the orchestrator thread and HTTP handlers."""

    def __init__(self, n_classes: int):
        self.n_classes = n_classes
        self._cond = threading.Condition()
        self.state = STATE_TRAINING
        self.cycle = 0
        self.tasks: dict[int, AnnotationTask] = {}
        self.order: list[int] = []
        self.metrics: dict | None = None
        self._committed_labels: dict[int, int] | None = None
        self._aborted = False

    # --- orchestrator side ---------------------------------------------------

    def on_status(self, event: str, payload: dict) -> None:
        """LoopRunner status hook."""
        with self._cond:
            if event == "cycle":
                self.cycle = payload["cycle"]
                self.state = STATE_TRAINING
            elif event == "metrics":
                self.metrics = payload["metrics"]
            elif event == "done":
                self.state = STATE_DONE
            self._cond.notify_all()

    def publish(self, requests: list[AnnotationRequest]) -> None:
        with self._cond:
            self.tasks = {r.sample_id: AnnotationTask(r) for r in requests}
            self.order = [r.sample_id for r in requests]
            self._committed_labels = None
            self.state = STATE_AWAITING
            self._cond.notify_all()

    def wait_for_commit(self, timeout: float | None = None) -> dict[int, int]:
        with self._cond:
            ok = self._cond.wait_for(
                lambda: self._committed_labels is not None or self._aborted,
                timeout=timeout,
            )
            if self._aborted:
                raise OracleAbort("annotation aborted")
            if not ok:
                raise OracleAbort("annotation timed out")
            labels = self._committed_labels
            self.state = STATE_TRAINING
            return dict(labels)

    def abort(self) -> None:
        with self._cond:
            self._aborted = True
            self._cond.notify_all()

    # --- handler side ----------------------------------------------------------

    def snapshot(self) -> dict:
        with self._cond:
            n_labeled = sum(1 for t in self.tasks.values() if t.status == "labeled")
            return {
                "cycle": self.cycle,
                "n_candidates": len(self.tasks),
                "n_labeled": n_labeled,
                "state": self.state,
                "metrics_so_far": self.metrics,
            }

    def candidates(self) -> list[dict]:
        with self._cond:
            if self.state != STATE_AWAITING:
                raise HTTPException(status_code=409,
                                    detail=f"no candidates while {self.state}")
            return [self.tasks[i].to_json() for i in self.order]

    def set_label(self, sample_id: int, label: int) -> dict:
        with self._cond:
            if self.state != STATE_AWAITING:
                raise HTTPException(status_code=409,
                                    detail="cycle is not awaiting labels")
            task = self.tasks.get(sample_id)
            if task is None:
                raise HTTPException(status_code=404,
                                    detail=f"unknown candidate id {sample_id}")
            if not (0 <= label < self.n_classes):
                raise HTTPException(status_code=422,
                                    detail=f"class {label} out of range")
            task.assigned_label = label  # idempotent upsert until commit
            task.status = "labeled"
            return task.to_json()

    def commit(self) -> dict:
        with self._cond:
            if self.state != STATE_AWAITING:
                raise HTTPException(status_code=409, detail="nothing to commit")
            pending = [i for i in self.order
                       if self.tasks[i].status != "labeled"]
            if pending:
                raise HTTPException(
                    status_code=409,
                    detail={"message": "cycle has pending tasks",
                            "pending_ids": pending},
                )
            self._committed_labels = {
                i: int(self.tasks[i].assigned_label) for i in self.order
            }
            # freeze: label posts after this point see 409 via state check
            self.state = STATE_TRAINING
            self._cond.notify_all()
            return {"committed": len(self._committed_labels),
                    "cycle": self.cycle}


class HumanOracle:
    """Blocks the orchestrator until a human commits the cycle's labels."""

    def __init__(self, store: AnnotationStore, timeout: float | None = None):
        self.store = store
        self.timeout = timeout

    def annotate(self, requests: list[AnnotationRequest]) -> dict[int, int]:
        self.store.publish(requests)
        return self.store.wait_for_commit(self.timeout)


def create_app(store: AnnotationStore, dataset: Dataset,
               static_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="labelloop annotation service")

    @app.get("/api/cycle")
    def cycle_status():
        return store.snapshot()

    @app.get("/api/candidates")
    def candidates():
        return store.candidates()

    @app.get("/api/candidates/{sample_id}/image")
    def candidate_image(sample_id: int):
        if dataset.image_shape is None:
            raise HTTPException(status_code=404,
                                detail="dataset has no image payloads")
        try:
            row = dataset.row_of(sample_id)
        except KeyError:
            raise HTTPException(status_code=404,
                                detail=f"unknown sample id {sample_id}")
        from PIL import Image

        h, w = dataset.image_shape
        pixels = np.clip(dataset.x[row].reshape(h, w) * 255.0, 0, 255)
        img = Image.fromarray(pixels.astype(np.uint8), mode="L")
        buf = io.BytesIO()
        img.save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.post("/api/labels")
    async def post_label(request: Request):
        body = await request.json()
        if not isinstance(body, dict) or "id" not in body or "class" not in body:
            raise HTTPException(status_code=422,
                                detail="body must be {id, class}")
        if not isinstance(body["id"], int) or not isinstance(body["class"], int):
            raise HTTPException(status_code=422,
                                detail="id and class must be integers")
        return store.set_label(body["id"], body["class"])

    @app.post("/api/commit")
    def commit():
        return store.commit()

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=static_dir, html=True),
                  name="static")
    else:
        @app.get("/")
        def index():
            return JSONResponse({
                "service": "labelloop annotation service",
                "endpoints": ["/api/cycle", "/api/candidates",
                              "/api/labels", "/api/commit"],
            })

    return app
