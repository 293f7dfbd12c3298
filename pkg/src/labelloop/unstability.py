"""Adversarial unstability scoring of unselected samples.

A virtual adversarial perturbation of bounded norm is found in representation
space by power iteration through the classification head; the unstability of
a sample is the KL divergence between its prediction and the prediction under
that perturbation. Samples near decision boundaries score high.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import LOG_EPS, TaskModel, head_probs

_FLAT_NORM = 1e-30  # below this the KL gradient is treated as exactly flat


@dataclass
class VatConfig:
    tau: float = 1.0  # perturbation norm
    n_t: int = 1  # power-iteration count
    xi: float | None = None  # finite step inside the iteration; None = auto
    k: int = 1  # selection budget

    def validate(self) -> None:
        if not (self.tau > 0 and np.isfinite(self.tau)):
            raise ValueError("tau must be finite and > 0")
        if self.n_t < 1:
            raise ValueError("n_t must be >= 1")
        if self.xi is not None and not (self.xi > 0 and np.isfinite(self.xi)):
            raise ValueError("xi must be finite and > 0")
        if self.k < 0:
            raise ValueError("k must be >= 0")

    def resolve_xi(self, dim: int) -> float:
        # the KL gradient vanishes exactly at zero perturbation, so the
        # iteration probes at a small finite offset
        return self.xi if self.xi is not None else 1e-6 * np.sqrt(dim)


@dataclass
class UnstabilityScore:
    sample_id: int
    variance: float  # KL divergence, nats
    perturbed_class: int


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """KL(p || q) in nats; q clamped at LOG_EPS, 0*log0 terms contribute 0."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("distribution length mismatch")
    return float(kl_rows(p[None, :], q[None, :])[0])


def kl_rows(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Row-wise KL(p || q) for matching (n, c) matrices."""
    p = np.asarray(p, dtype=np.float64)
    q = np.clip(np.asarray(q, dtype=np.float64), LOG_EPS, None)
    terms = np.where(p > 0, p * (np.log(np.clip(p, LOG_EPS, None)) - np.log(q)), 0.0)
    return np.sum(terms, axis=1)


def _unit_rows(m: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return m / norms


def vat_perturbation_batch(
    model: TaskModel,
    representations: np.ndarray,
    base_probs: np.ndarray,
    cfg: VatConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Norm-tau perturbations maximizing KL against the head output.

    Power iteration: d <- normalize(grad_d KL(p || head(r + xi*d))), repeated
    n_t times from a random unit start. The iteration fixes d only up to sign,
    so both tau*d and -tau*d are evaluated and the larger-KL one is returned.
    Rows where the gradient is exactly flat fall back to the initial random
    direction and are flagged.
    """
    r = np.atleast_2d(np.asarray(representations, dtype=np.float64))
    p = np.atleast_2d(np.asarray(base_probs, dtype=np.float64))
    n, dim = r.shape
    xi = cfg.resolve_xi(dim)
    w, _ = model.head()

    d0 = _unit_rows(rng.standard_normal((n, dim)))
    d = d0.copy()
    flat = np.zeros(n, dtype=bool)
    for _ in range(cfg.n_t):
        q = head_probs(model, r + xi * d)
        g = (q - p) @ w.T
        norms = np.linalg.norm(g, axis=1)
        flat |= norms < _FLAT_NORM
        ok = ~flat
        d[ok] = g[ok] / norms[ok, None]

    plus = cfg.tau * d
    kl_plus = kl_rows(p, head_probs(model, r + plus))
    kl_minus = kl_rows(p, head_probs(model, r - plus))
    sign = np.where(kl_plus >= kl_minus, 1.0, -1.0)[:, None]
    out = sign * plus
    out[flat] = cfg.tau * d0[flat]
    return out, flat


def vat_perturbation(
    model: TaskModel,
    representation: np.ndarray,
    base_probs: np.ndarray,
    cfg: VatConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, bool]:
    """Single-sample perturbation; returns (r_p, flat_point_flag)."""
    out, flat = vat_perturbation_batch(
        model,
        np.asarray(representation, dtype=np.float64)[None, :],
        np.asarray(base_probs, dtype=np.float64)[None, :],
        cfg,
        rng,
    )
    return out[0], bool(flat[0])


def unstability_score(
    base_probs: np.ndarray, perturbed_probs: np.ndarray, sample_id: int
) -> UnstabilityScore:
    return UnstabilityScore(
        sample_id=int(sample_id),
        variance=kl_divergence(base_probs, perturbed_probs),
        perturbed_class=int(np.argmax(perturbed_probs)),
    )


def score_unstability(
    model: TaskModel,
    ids: np.ndarray,
    representations: np.ndarray,
    base_probs: np.ndarray,
    cfg: VatConfig,
    rng: np.random.Generator,
) -> list[UnstabilityScore]:
    """Score a pool against a frozen model snapshot."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.shape[0] == 0:
        return []
    r_p, _ = vat_perturbation_batch(model, representations, base_probs, cfg, rng)
    perturbed = head_probs(model, np.atleast_2d(representations) + r_p)
    variances = kl_rows(base_probs, perturbed)
    classes = np.argmax(perturbed, axis=1)
    return [
        UnstabilityScore(int(i), float(v), int(c))
        for i, v, c in zip(ids, variances, classes)
    ]


def select_unstable_topk(scores: list[UnstabilityScore], k: int) -> list[int]:
    """Ids of the k largest variances, sorted descending; ties to lower id."""
    for s in scores:
        if not np.isfinite(s.variance):
            raise ValueError(f"non-finite variance for sample {s.sample_id}")
    ranked = sorted(scores, key=lambda s: (-s.variance, s.sample_id))
    return [s.sample_id for s in ranked[: max(k, 0)]]
