"""Consistency-based adaptive label propagation.

Adaptive confidence threshold driven by the high-confidence count ratio and
the last annotation round's size, pseudo-label selection above the threshold,
and the unsupervised consistency loss against strong-augmented predictions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import cross_entropy_rows

# Keeps the threshold strictly positive; under the strict ">" comparison this
# is behaviorally identical to 0 (max prob is always >= 1/n_classes).
EPSILON_FLOOR = 1e-12


@dataclass
class ThresholdState:
    """Running quantities for the adaptive threshold."""

    alpha: float = 0.9
    beta: float = 0.05
    t_max: int = 50_000
    step: int = 0
    count_prev: int = 0
    count_curr: int = 0
    n_annotated: int = 0  # size of the last annotation round
    k_budget: int = 1  # per-selector budget K

    def validate(self) -> None:
        if not (0 < self.alpha < 1):
            raise ValueError("alpha must be in (0, 1)")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.alpha + self.beta > 1:
            raise ValueError("alpha + beta must be <= 1")
        if self.t_max < 1:
            raise ValueError("t_max must be positive")
        if min(self.step, self.count_prev, self.count_curr, self.n_annotated) < 0:
            raise ValueError("counts and step must be nonnegative")
        if self.k_budget < 1:
            raise ValueError("k_budget must be positive")


def count_high_confidence(probs: np.ndarray, alpha: float, beta: float) -> int:
    """Number of samples whose max class probability exceeds alpha + beta."""
    p = np.asarray(probs, dtype=np.float64)
    if p.size == 0:
        return 0
    return int(np.sum(np.max(p, axis=1) > (alpha + beta)))


def adaptive_threshold(state: ThresholdState) -> float:
    """Confidence cutoff for pseudo-label admission at the current step.

    Before t_max: alpha * min(1, count_t/count_{t-1}) + beta * N_A/(2K), with
    the ratio defined as 1 on a cold start (count_{t-1} = 0) and the quota
    term clamped at 1. From t_max on: alpha + beta.
    """
    if state.step >= state.t_max:
        return state.alpha + state.beta
    if state.count_prev == 0:
        ratio = 1.0
    else:
        ratio = min(1.0, state.count_curr / state.count_prev)
    quota = min(1.0, state.n_annotated / (2.0 * state.k_budget))
    return max(state.alpha * ratio + state.beta * quota, EPSILON_FLOOR)


@dataclass
class PseudoBatch:
    """SSL-selected sample ids with one-hot pseudo-labels.

    probs holds the weak-draw probabilities the selection was made from.
    """

    ids: np.ndarray
    labels: np.ndarray  # (n, n_classes) one-hot
    probs: np.ndarray  # (n, n_classes) weak-draw probabilities

    @property
    def size(self) -> int:
        return int(self.ids.shape[0])

    @classmethod
    def empty(cls, n_classes: int) -> "PseudoBatch":
        return cls(
            ids=np.zeros(0, dtype=np.int64),
            labels=np.zeros((0, n_classes)),
            probs=np.zeros((0, n_classes)),
        )


def select_pseudo(
    probs: np.ndarray, ids: np.ndarray, threshold: float
) -> tuple[PseudoBatch, np.ndarray]:
    """Split U into the pseudo-labeled batch and its complement.

    A sample is selected iff its max weak probability strictly exceeds the
    threshold; the pseudo-label is the argmax one-hot (ties to lowest index).
    """
    if not (0 < threshold <= 1):
        raise ValueError("threshold must be in (0, 1]")
    p = np.asarray(probs, dtype=np.float64)
    ids = np.asarray(ids, dtype=np.int64)
    if p.shape[0] != ids.shape[0]:
        raise ValueError("probs and ids must align")
    if p.shape[0] == 0:
        return PseudoBatch.empty(p.shape[1] if p.ndim == 2 else 0), ids
    mask = np.max(p, axis=1) > threshold
    chosen = p[mask]
    labels = np.zeros_like(chosen)
    if chosen.shape[0]:
        labels[np.arange(chosen.shape[0]), np.argmax(chosen, axis=1)] = 1.0
    return (
        PseudoBatch(ids=ids[mask], labels=labels, probs=chosen),
        ids[~mask],
    )


def unsupervised_loss(
    pseudo: PseudoBatch, strong_probs: np.ndarray, strong_ids: np.ndarray,
    mu: float = 1.0,
) -> float:
    """(mu / N) * sum of CE(pseudo one-hot, strong-draw probs); 0 when empty."""
    if pseudo.size == 0:
        return 0.0
    strong_ids = np.asarray(strong_ids, dtype=np.int64)
    if strong_ids.shape[0] != pseudo.size or np.any(strong_ids != pseudo.ids):
        raise ValueError("strong-draw predictions do not align with pseudo batch")
    sp = np.asarray(strong_probs, dtype=np.float64)
    if sp.shape != pseudo.labels.shape:
        raise ValueError("strong probs shape mismatch")
    return float(mu / pseudo.size * np.sum(cross_entropy_rows(pseudo.labels, sp)))


def total_loss(supervised: float, unsupervised: float) -> float:
    """Full objective: supervised plus unsupervised cross-entropy terms."""
    if not (np.isfinite(supervised) and np.isfinite(unsupervised)):
        raise ValueError("loss terms must be finite")
    return float(supervised + unsupervised)
