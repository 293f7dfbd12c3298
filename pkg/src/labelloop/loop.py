"""Closed-loop training: per-cycle SSL training with adaptive pseudo-labels,
unstable + uncertain candidate selection on a frozen snapshot, oracle
annotation, pool updates, budget accounting, and run reporting.

One orchestrator thread owns the pools and the model; selector scoring runs
on immutable snapshots taken at cycle boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .augment import (
    SLOT_EVAL,
    SLOT_LABELED,
    SLOT_STRONG,
    AugmentPolicy,
    augment_batch,
    pack_draw,
    strong_policy,
    weak_policy,
)
from .config import RunConfig, config_to_dict
from .data import Dataset
from .metrics import compute_metrics, count_correct_pseudo
from .nn import (
    LossSpec,
    OptimizerConfig,
    TaskModel,
    TrainBatch,
    forward,
    grad_params,
    one_hot,
    save_checkpoint,
    sgd_step,
)
from .oracles import AnnotationRequest, Oracle
from .propagation import (
    PseudoBatch,
    ThresholdState,
    adaptive_threshold,
    count_high_confidence,
    select_pseudo,
)
from .report import RunReporter
from .uncertainty import (
    BusConfig,
    build_neighbor_index,
    score_uncertainty,
    select_balanced,
)
from .unstability import VatConfig, score_unstability, select_unstable_topk

# rng stream tags, mixed with the run seed
_TAG_INIT = 1
_TAG_BATCH = 2
_TAG_VAT = 3
_TAG_RS = 4
_TAG_MODEL = 5


@dataclass
class PoolState:
    """Partition of the training set: labeled pool, SSL-selected pseudo set,
    and the unselected remainder."""

    labeled_ids: np.ndarray
    labels: dict[int, int]
    unlabeled_ids: np.ndarray
    pseudo: PseudoBatch
    unselected_ids: np.ndarray
    cycle: int = 0
    annotations_used: int = 0


def init_pools(train: Dataset, ip_fraction: float, seed: int) -> PoolState:
    """Initial labeled pool: floor(IP*N) samples drawn per-class uniformly.

    Equal count per class, remainder round-robin by class index; a class
    smaller than its share contributes everything and the deficit moves
    round-robin to classes with samples left.
    """
    if not (0 < ip_fraction <= 1):
        raise ValueError("ip_fraction must be in (0, 1]")
    n_classes = train.n_classes
    class_ids = []
    for c in range(n_classes):
        ids_c = np.sort(train.ids[train.y == c])
        if ids_c.size == 0:
            raise ValueError(f"class {c} has no samples in the training set")
        class_ids.append(ids_c)

    target_total = int(ip_fraction * train.n)
    base, rem = divmod(target_total, n_classes)
    targets = [base + (1 if c < rem else 0) for c in range(n_classes)]
    deficit = 0
    for c in range(n_classes):
        if targets[c] > class_ids[c].size:
            deficit += targets[c] - class_ids[c].size
            targets[c] = class_ids[c].size
    while deficit > 0:
        placed = False
        for c in range(n_classes):
            if deficit == 0:
                break
            if targets[c] < class_ids[c].size:
                targets[c] += 1
                deficit -= 1
                placed = True
        if not placed:
            break

    rng = np.random.default_rng((seed, _TAG_INIT))
    chosen = []
    for c in range(n_classes):
        if targets[c] > 0:
            chosen.append(rng.choice(class_ids[c], size=targets[c], replace=False))
    labeled = np.sort(np.concatenate(chosen)) if chosen else np.zeros(0, np.int64)
    unlabeled = np.setdiff1d(train.ids, labeled)
    labels = {int(i): int(train.y[train.row_of(int(i))]) for i in labeled}
    return PoolState(
        labeled_ids=labeled.astype(np.int64),
        labels=labels,
        unlabeled_ids=unlabeled.astype(np.int64),
        pseudo=PseudoBatch.empty(n_classes),
        unselected_ids=unlabeled.astype(np.int64),
    )


@dataclass
class SelectionReport:
    cycle: int
    unstable_ids: list[int]
    uncertain_ids: list[int]
    candidate_ids: list[int]  # ordered by descending unified rank, truncated
    unified_rank: dict[int, float]
    n_annotated: int
    labels: dict[int, int]


def unified_ranks(aus_top: list[int], bus_top: list[int]) -> dict[int, float]:
    """Candidate rank = max of the normalized per-selector ranks (top = 1)."""
    ranks: dict[int, float] = {}
    for top in (aus_top, bus_top):
        m = len(top)
        for i, sample_id in enumerate(top):
            r = (m - i) / m
            ranks[sample_id] = max(ranks.get(sample_id, 0.0), r)
    return ranks


def rank_candidates(
    model: TaskModel,
    ids: np.ndarray,
    x: np.ndarray,
    *,
    k: int,
    n_classes: int,
    vat: VatConfig,
    bus: BusConfig,
    rng: np.random.Generator,
    disable_aus: bool = False,
    disable_bus: bool = False,
):
    """Score a pool on a frozen snapshot and rank the union of selections.

    Returns (aus_scores, bus_scores, aus_top, bus_top, ordered_ids, ranks,
    predictions, neighbor_index).
    """
    pred = forward(model, x)
    aus_scores, bus_scores = [], []
    aus_top: list[int] = []
    bus_top: list[int] = []
    index = None
    if not disable_aus:
        aus_scores = score_unstability(
            model, ids, pred.representations, pred.probs, vat, rng
        )
        aus_top = select_unstable_topk(aus_scores, k)
    if not disable_bus:
        index = build_neighbor_index(ids, pred.representations, bus.m)
        bus_scores = score_uncertainty(
            ids, pred.probs, pred.representations, bus.m, index=index
        )
        bus_top = select_balanced(bus_scores, k, n_classes)
    ranks = unified_ranks(aus_top, bus_top)
    ordered = sorted(ranks, key=lambda i: (-ranks[i], i))
    return aus_scores, bus_scores, aus_top, bus_top, ordered, ranks, pred, index


class LoopRunner:
    """Runs the full annotation loop over pre-split train/val/test sets."""

    def __init__(
        self,
        train: Dataset,
        val: Dataset,
        test: Dataset,
        cfg: RunConfig,
        oracle: Oracle,
        reporter: RunReporter | None = None,
        status=None,
    ):
        self.train, self.val, self.test = train, val, test
        self.cfg = cfg
        self.oracle = oracle
        self.reporter = reporter or RunReporter(None)
        self.status = status or (lambda event, payload: None)
        self.seed = cfg.seed

        self.k = cfg.k_per_selector(train.n)
        self.budget_total = cfg.budget(train.n)
        self.sizes = (train.dim, *cfg.model.hidden, train.n_classes)
        self.model = TaskModel.init(self.sizes, cfg.seed)
        self.opt = cfg.optimizer

        sigma_w = cfg.augment.sigma_scale * float(np.mean(np.std(train.x, axis=0)))
        self.weak = weak_policy(
            sigma_w, seed=cfg.seed, flip_prob=cfg.augment.flip_prob,
            shift_fraction=cfg.augment.shift_fraction,
        )
        self.strong = strong_policy(
            sigma_w, seed=cfg.seed, sigma_factor=cfg.augment.strong_sigma_factor,
            drop_prob=cfg.augment.drop_prob, scale_range=cfg.augment.scale_range,
            flip_prob=cfg.augment.flip_prob,
            shift_fraction=cfg.augment.shift_fraction,
        )

        self.thr = ThresholdState(
            alpha=cfg.ssl.alpha,
            beta=cfg.ssl.beta,
            t_max=cfg.t_max(),
            k_budget=max(self.k, 1),
        )
        self.thr.validate()
        self.pool = init_pools(train, cfg.loop.ip_fraction, cfg.seed)
        self.initial_labeled = [int(i) for i in self.pool.labeled_ids]
        self.global_step = 0
        # best-validation snapshot within the current training phase; the
        # run's final metrics and checkpoint come from the last phase's best
        # (standard model selection under early stopping)
        self.best_val = -np.inf
        self.best_model = self.model.copy()
        self._row = {int(i): r for r, i in enumerate(train.ids)}
        self.records: list[dict] = []
        self.selections: list[SelectionReport] = []

    # --- helpers -----------------------------------------------------------

    def _rows(self, ids: np.ndarray) -> np.ndarray:
        return np.fromiter((self._row[int(i)] for i in ids), dtype=np.int64,
                           count=len(ids))

    def _aug(self, ids: np.ndarray, policy: AugmentPolicy, cycle: int,
             slot: int) -> np.ndarray:
        x = self.train.x[self._rows(ids)]
        return augment_batch(x, ids, policy, pack_draw(cycle, self.global_step, slot),
                             self.train.image_shape)

    def _accuracy(self, ds: Dataset) -> float | None:
        if ds.n == 0:
            return None
        pred = forward(self.model, ds.x).pred_class
        return float(np.mean(pred == ds.y))

    def _metrics(self, ds: Dataset, model: TaskModel | None = None) -> dict | None:
        if ds.n == 0:
            return None
        pred = forward(model or self.model, ds.x).pred_class
        return compute_metrics(pred, ds.y, ds.n_classes)

    def _final_model(self) -> TaskModel:
        """Best-validation snapshot, or the live model when there is no val set."""
        return self.best_model if np.isfinite(self.best_val) else self.model

    # --- training ----------------------------------------------------------

    def _refresh_pseudo(self, cycle: int) -> tuple[float, int]:
        """Single weak draw over U: update counts, threshold, and U^s/U^u."""
        u = self.pool.unlabeled_ids
        self.thr.step = self.global_step
        if u.size == 0:
            count_t = 0
            probs = np.zeros((0, self.train.n_classes))
        else:
            xw = self._aug(u, self.weak, cycle, SLOT_EVAL)
            probs = forward(self.model, xw).probs
            count_t = count_high_confidence(probs, self.thr.alpha, self.thr.beta)
        self.thr.count_prev = self.thr.count_curr
        self.thr.count_curr = count_t
        if self.cfg.loop.disable_adaptive_threshold:
            eps = self.thr.alpha + self.thr.beta
        else:
            eps = adaptive_threshold(self.thr)
        self.pool.pseudo, self.pool.unselected_ids = select_pseudo(probs, u, eps)
        self.reporter.threshold_row(
            cycle, self.global_step, eps, count_t, self.pool.pseudo.size
        )
        return eps, count_t

    def _sgd_one_step(self, cycle: int, rng: np.random.Generator) -> None:
        b = self.opt.batch_size
        labeled = self.pool.labeled_ids
        lab_ids = rng.choice(labeled, size=min(b, labeled.size), replace=False)
        x = self._aug(lab_ids, self.weak, cycle, SLOT_LABELED)
        y = one_hot(
            np.array([self.pool.labels[int(i)] for i in lab_ids]),
            self.train.n_classes,
        )
        pseudo = self.pool.pseudo
        x_strong, p_labels = None, None
        if pseudo.size > 0:
            pick = rng.choice(pseudo.size, size=min(b, pseudo.size), replace=False)
            ps_ids = pseudo.ids[pick]
            x_strong = self._aug(ps_ids, self.strong, cycle, SLOT_STRONG)
            p_labels = pseudo.labels[pick]
        grads, _ = grad_params(
            self.model,
            TrainBatch(x=x, x_strong=x_strong),
            LossSpec("combined", labels=y, pseudo_labels=p_labels, mu=self.cfg.ssl.mu),
        )
        sgd_step(self.model, grads, self.opt)
        self.global_step += 1

    def _train_phase(self, cycle: int) -> dict:
        cfg = self.cfg
        if cfg.loop.cold_start and cycle > 0:
            fresh = int(np.random.SeedSequence((self.seed, _TAG_MODEL, cycle))
                        .generate_state(1)[0])
            self.model = TaskModel.init(self.sizes, fresh)
        rng = np.random.default_rng((self.seed, _TAG_BATCH, cycle))
        self.best_val = -np.inf  # best-val tracking restarts every phase
        plateau = 0
        steps_run = 0
        eps, count_t = 0.0, 0
        for local in range(cfg.loop.steps_per_cycle):
            if local % cfg.loop.eval_interval == 0:
                eps, count_t = self._refresh_pseudo(cycle)
                val_acc = self._accuracy(self.val)
                if val_acc is not None:
                    if val_acc > self.best_val:
                        self.best_val = val_acc
                        self.best_model = self.model.copy()
                        plateau = 0
                    else:
                        plateau += 1
                        if plateau >= cfg.loop.early_stop_patience:
                            break
            self._sgd_one_step(cycle, rng)
            steps_run += 1
        eps, count_t = self._refresh_pseudo(cycle)  # converged-state pools
        val_acc = self._accuracy(self.val)
        if val_acc is not None and val_acc > self.best_val:
            self.best_val = val_acc
            self.best_model = self.model.copy()

        pseudo = self.pool.pseudo
        truth = self.train.truth()
        if pseudo.size > 0 and all(int(i) in truth for i in pseudo.ids):
            correct, ratio = count_correct_pseudo(pseudo, truth)
        elif pseudo.size == 0:
            correct, ratio = 0, 0.0
        else:
            correct, ratio = None, None

        reps = forward(self.model, self.train.x).representations
        self.reporter.representations(cycle, self.train.ids, reps)
        record = {
            "cycle": cycle,
            "steps": steps_run,
            "global_step": self.global_step,
            "epsilon": eps,
            "count_high_confidence": count_t,
            "labeled_pool": int(self.pool.labeled_ids.size),
            "pseudo": {"size": pseudo.size, "correct": correct, "ratio": ratio},
            "metrics": {"val": self._metrics(self.val),
                        "test": self._metrics(self.test)},
            "selection": None,
        }
        return record

    # --- selection + annotation ---------------------------------------------

    def _select_and_annotate(self, cycle: int, budget_left: int) -> SelectionReport:
        cfg = self.cfg
        # selectors score the unselected set; the random baseline draws from
        # the whole unlabeled pool
        pool_ids = (self.pool.unlabeled_ids if cfg.loop.random_sampling
                    else self.pool.unselected_ids)
        snapshot = self.model.copy()
        report = SelectionReport(
            cycle=cycle, unstable_ids=[], uncertain_ids=[], candidate_ids=[],
            unified_rank={}, n_annotated=0, labels={},
        )
        if pool_ids.size == 0 or self.k <= 0 or budget_left <= 0:
            return report

        index = None
        pred = None
        aus_scores: list = []
        bus_scores: list = []
        if cfg.loop.random_sampling:
            rng = np.random.default_rng((self.seed, _TAG_RS, cycle))
            m = min(2 * self.k, int(pool_ids.size))
            drawn = rng.choice(pool_ids, size=m, replace=False)
            ordered = [int(i) for i in drawn]
            ranks = {int(i): (m - pos) / m for pos, i in enumerate(drawn)}
            pred = forward(snapshot, self.train.x[self._rows(pool_ids)])
        else:
            vat = VatConfig(tau=cfg.aus.tau, n_t=cfg.aus.n_t, xi=cfg.aus.xi, k=self.k)
            bus = BusConfig(m=cfg.bus.m, k=self.k)
            rng_vat = np.random.default_rng((self.seed, _TAG_VAT, cycle))
            (aus_scores, bus_scores, aus_top, bus_top, ordered, ranks, pred,
             index) = rank_candidates(
                snapshot, pool_ids, self.train.x[self._rows(pool_ids)],
                k=self.k, n_classes=self.train.n_classes, vat=vat, bus=bus,
                rng=rng_vat, disable_aus=cfg.loop.disable_aus,
                disable_bus=cfg.loop.disable_bus,
            )
            if aus_scores:
                base_class = {int(i): int(c) for i, c in
                              zip(pool_ids, pred.pred_class)}
                self.reporter.aus_dump(cycle, aus_scores, base_class)
            if bus_scores:
                self.reporter.bus_dump(cycle, bus_scores)
            report.unstable_ids = aus_top
            report.uncertain_ids = bus_top

        candidates = ordered[:budget_left]
        report.candidate_ids = candidates
        report.unified_rank = {i: ranks[i] for i in candidates}
        if not candidates:
            return report

        requests = self._build_requests(cycle, candidates, pool_ids, pred,
                                        ranks, aus_scores, bus_scores, index)
        labels = dict(self.oracle.annotate(requests))
        for i in candidates:
            if i not in labels:
                raise ValueError(f"oracle did not label candidate {i}")
            if not (0 <= labels[i] < self.train.n_classes):
                raise ValueError(f"oracle label out of range for candidate {i}")

        # commit: pools mutate only after the oracle answered the whole set
        cand = np.array(candidates, dtype=np.int64)
        assert np.intersect1d(cand, self.pool.labeled_ids).size == 0
        self.pool.labeled_ids = np.sort(
            np.concatenate([self.pool.labeled_ids, cand])
        )
        self.pool.unlabeled_ids = np.setdiff1d(self.pool.unlabeled_ids, cand)
        self.pool.unselected_ids = np.setdiff1d(self.pool.unselected_ids, cand)
        for i in candidates:
            self.pool.labels[int(i)] = int(labels[i])
        self.pool.annotations_used += len(candidates)
        self.pool.cycle += 1
        self.thr.n_annotated = len(candidates)
        report.n_annotated = len(candidates)
        report.labels = {int(i): int(labels[i]) for i in candidates}
        self.selections.append(report)
        return report

    def _build_requests(self, cycle, candidates, pool_ids, pred, ranks,
                        aus_scores, bus_scores, index) -> list[AnnotationRequest]:
        pos = {int(i): p for p, i in enumerate(pool_ids)}
        aus_info = {s.sample_id: s for s in aus_scores}
        bus_info = {s.sample_id: s for s in bus_scores}
        requests = []
        for i in candidates:
            p = pos[int(i)]
            row = self._row[int(i)]
            features = None
            neighbor_points = None
            if self.train.image_shape is None:
                features = [float(v) for v in self.train.x[row]]
                if index is not None and index.sims.shape[1] > 0:
                    nbr_ids = index.neighbor_ids[index.row(int(i))]
                    neighbor_points = [
                        [float(v) for v in self.train.x[self._row[int(j)]][:2]]
                        for j in nbr_ids
                    ]
            req = AnnotationRequest(
                sample_id=int(i),
                cycle=cycle,
                probs=[float(v) for v in pred.probs[p]],
                predicted_class=int(pred.pred_class[p]),
                unified_rank=float(ranks[int(i)]),
                features=features,
                has_image=self.train.image_shape is not None,
                neighbor_points=neighbor_points,
            )
            if req.sample_id in aus_info:
                s = aus_info[req.sample_id]
                req.aus_variance = s.variance
                req.aus_perturbed_class = s.perturbed_class
            if req.sample_id in bus_info:
                s = bus_info[req.sample_id]
                req.bus_entropy = s.entropy
                req.bus_density = s.density_weight
                req.bus_weighted = s.weighted
            requests.append(req)
        return requests

    # --- run ----------------------------------------------------------------

    def run(self) -> dict:
        cfg = self.cfg
        rounds = 0
        stop_reason = "max_cycles"
        while True:
            self.status("cycle", {"cycle": rounds})
            record = self._train_phase(rounds)
            self.records.append(record)
            self.status("metrics", {"cycle": rounds, "metrics": record["metrics"]})

            acc = None
            if record["metrics"]["val"] is not None:
                acc = record["metrics"]["val"]["ACC"]
            elif record["metrics"]["test"] is not None:
                acc = record["metrics"]["test"]["ACC"]
            if (cfg.loop.target_accuracy is not None and acc is not None
                    and acc >= cfg.loop.target_accuracy):
                stop_reason = "target_accuracy"
                break
            if rounds >= cfg.loop.max_cycles:
                stop_reason = "max_cycles"
                break
            budget_left = self.budget_total - self.pool.annotations_used
            if budget_left <= 0:
                stop_reason = "budget_exhausted"
                break
            if self.k <= 0:
                stop_reason = "no_selection_budget"
                break
            selection = self._select_and_annotate(rounds, budget_left)
            record["selection"] = {
                "unstable_ids": selection.unstable_ids,
                "uncertain_ids": selection.uncertain_ids,
                "candidates": selection.candidate_ids,
                "n_annotated": selection.n_annotated,
                "labels": {str(i): c for i, c in sorted(selection.labels.items())},
                "unified_rank": {str(i): r for i, r in
                                 sorted(selection.unified_rank.items())},
            }
            if selection.n_annotated == 0:
                stop_reason = "no_candidates"
                break
            rounds += 1

        final = self._final_model()
        final_metrics = {"val": self._metrics(self.val, final),
                         "test": self._metrics(self.test, final)}
        report = {
            "config": config_to_dict(cfg, include_output_dir=False),
            "dataset": {
                "n_train": self.train.n,
                "n_val": self.val.n,
                "n_test": self.test.n,
                "n_classes": self.train.n_classes,
                "dim": self.train.dim,
            },
            "k_per_selector": self.k,
            "t_max": self.thr.t_max,
            "budget": {"total": self.budget_total,
                       "used": self.pool.annotations_used},
            "initial_labeled_ids": self.initial_labeled,
            "cycles": self.records,
            "final": {
                "stop_reason": stop_reason,
                "annotation_rounds": rounds,
                "global_steps": self.global_step,
                "labeled_pool": int(self.pool.labeled_ids.size),
                "metrics": final_metrics,
            },
        }
        ckpt = self.reporter.checkpoint_path()
        if ckpt is not None:
            save_checkpoint(final, ckpt)
        self.reporter.write_report(report)
        self.status("done", {"report": report})
        return report


def run_loop(
    train: Dataset,
    val: Dataset,
    test: Dataset,
    cfg: RunConfig,
    oracle: Oracle,
    output_dir: str | None = None,
    status=None,
) -> dict:
    reporter = RunReporter(output_dir if output_dir is not None else cfg.output_dir)
    runner = LoopRunner(train, val, test, cfg, oracle, reporter, status)
    return runner.run()
