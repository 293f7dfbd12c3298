"""Run artifacts: report.json, JSONL score/threshold traces, representation
dumps, final checkpoint. All output is deterministic for a fixed seed/config:
sorted keys, no timestamps, floats via repr."""

from __future__ import annotations

import json
import os

import numpy as np


def dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, allow_nan=False, separators=(",", ": "))


class RunReporter:
    """Collects per-cycle records and writes the run directory layout."""

    def __init__(self, output_dir: str | None):
        self.output_dir = output_dir
        self.threshold_rows: list[dict] = []
        self.aus_rows: list[dict] = []
        self.bus_rows: list[dict] = []
        if output_dir is not None:
            os.makedirs(output_dir, exist_ok=True)

    def _append_jsonl(self, name: str, rows: list[dict]) -> None:
        if self.output_dir is None or not rows:
            return
        with open(os.path.join(self.output_dir, name), "a") as f:
            for row in rows:
                f.write(dump_json(row) + "\n")

    def threshold_row(self, cycle: int, step: int, epsilon: float,
                      count: int, pseudo_size: int) -> None:
        row = {
            "cycle": cycle,
            "step": step,
            "epsilon": epsilon,
            "count": count,
            "pseudo_size": pseudo_size,
        }
        self.threshold_rows.append(row)
        self._append_jsonl("threshold_trace.jsonl", [row])

    def aus_dump(self, cycle: int, scores, base_classes: dict[int, int]) -> None:
        rows = [
            {
                "cycle": cycle,
                "id": s.sample_id,
                "variance": s.variance,
                "base_class": base_classes[s.sample_id],
                "perturbed_class": s.perturbed_class,
            }
            for s in scores
        ]
        self.aus_rows.extend(rows)
        self._append_jsonl("aus_scores.jsonl", rows)

    def bus_dump(self, cycle: int, scores) -> None:
        rows = [
            {
                "cycle": cycle,
                "id": s.sample_id,
                "entropy": s.entropy,
                "density_weight": s.density_weight,
                "weighted_score": s.weighted,
                "predicted_class": s.predicted_class,
            }
            for s in scores
        ]
        self.bus_rows.extend(rows)
        self._append_jsonl("bus_scores.jsonl", rows)

    def representations(self, cycle: int, ids: np.ndarray, reps: np.ndarray) -> None:
        if self.output_dir is None:
            return
        base = os.path.join(self.output_dir, f"representations_cycle{cycle}")
        with open(base + ".bin", "wb") as f:
            f.write(np.ascontiguousarray(reps, dtype="<f8").tobytes())
        with open(base + ".json", "w") as f:
            f.write(dump_json({"ids": [int(i) for i in ids],
                               "dim": int(reps.shape[1])}))

    def write_report(self, report: dict) -> None:
        if self.output_dir is None:
            return
        with open(os.path.join(self.output_dir, "report.json"), "w") as f:
            f.write(dump_json(report) + "\n")

    def checkpoint_path(self) -> str | None:
        if self.output_dir is None:
            return None
        return os.path.join(self.output_dir, "model_final.bmis")
