"""Balanced density-aware uncertainty scoring.

Predictive entropy reweighted by the mean cosine similarity to a sample's M
nearest neighbors in representation space (outliers get demoted), followed by
a per-predicted-class balanced top-K selection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class BusConfig:
    m: int = 20  # neighborhood size for the density weight
    k: int = 1  # selection budget

    def validate(self) -> None:
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.k < 0:
            raise ValueError("k must be >= 0")


@dataclass
class UncertaintyScore:
    sample_id: int
    entropy: float  # nats
    density_weight: float  # mean neighbor cosine similarity, in [-1, 1]
    weighted: float  # entropy * density_weight
    predicted_class: int


def entropy_score(probs: np.ndarray) -> float:
    """Predictive entropy -sum p log p in nats; 0*log0 contributes 0."""
    return float(entropy_rows(np.asarray(probs, dtype=np.float64)[None, :])[0])


def entropy_rows(probs: np.ndarray) -> np.ndarray:
    p = np.asarray(probs, dtype=np.float64)
    terms = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return -np.sum(terms, axis=1)


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    """u.v / (|u||v|); defined as 0 when either vector is zero."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError("vector dimension mismatch")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


@dataclass
class NeighborIndex:
    """Exact cosine nearest neighbors over a representation matrix.

    neighbor_ids[i] holds the min(m, n-1) ids most similar to sample i,
    self excluded; sims[i] the matching similarities.
    """

    ids: np.ndarray
    neighbor_ids: np.ndarray
    sims: np.ndarray
    m: int

    def row(self, sample_id: int) -> int:
        pos = np.flatnonzero(self.ids == sample_id)
        if pos.size == 0:
            raise KeyError(f"sample {sample_id} not in index")
        return int(pos[0])


def build_neighbor_index(ids: np.ndarray, representations: np.ndarray, m: int) -> NeighborIndex:
    ids = np.asarray(ids, dtype=np.int64)
    r = np.atleast_2d(np.asarray(representations, dtype=np.float64))
    n = r.shape[0]
    if ids.shape[0] != n:
        raise ValueError("ids must align with representation rows")
    m_eff = min(m, max(n - 1, 0))
    if m_eff == 0:
        return NeighborIndex(
            ids=ids,
            neighbor_ids=np.zeros((n, 0), dtype=np.int64),
            sims=np.zeros((n, 0)),
            m=m,
        )
    norms = np.linalg.norm(r, axis=1, keepdims=True)
    unit = np.divide(r, norms, out=np.zeros_like(r), where=norms > 0)
    sim = unit @ unit.T  # zero rows yield similarity 0 everywhere
    np.fill_diagonal(sim, -np.inf)  # a sample is never its own neighbor
    # stable sort on -sim so similarity ties resolve toward the lower id
    order = np.argsort(-sim, axis=1, kind="stable")[:, :m_eff]
    rows = np.arange(n)[:, None]
    return NeighborIndex(
        ids=ids, neighbor_ids=ids[order], sims=sim[rows, order], m=m
    )


def density_weight(sample_id: int, index: NeighborIndex) -> float:
    """Mean cosine similarity to the sample's nearest neighbors; 1 if alone."""
    row = index.row(sample_id)
    if index.sims.shape[1] == 0:
        return 1.0  # singleton pool: no neighbors to compare against
    return float(np.mean(index.sims[row]))


def score_uncertainty(
    ids: np.ndarray,
    probs: np.ndarray,
    representations: np.ndarray,
    m: int,
    index: NeighborIndex | None = None,
) -> list[UncertaintyScore]:
    """Density-weighted entropy scores for a pool."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.shape[0] == 0:
        return []
    p = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    ent = entropy_rows(p)
    pred = np.argmax(p, axis=1)
    if index is None:
        index = build_neighbor_index(ids, representations, m)
    if index.sims.shape[1] == 0:
        weights = np.ones(ids.shape[0])
    else:
        weights = np.mean(index.sims, axis=1)
    return [
        UncertaintyScore(int(i), float(e), float(w), float(e * w), int(c))
        for i, e, w, c in zip(ids, ent, weights, pred)
    ]


def select_balanced(
    scores: list[UncertaintyScore], k: int, n_classes: int
) -> list[int]:
    """Per-predicted-class quota of floor(K / N_c) by weighted score, then
    unfilled quota redistributed to the globally highest-scoring remainder.

    Returns at most k ids, ordered by descending weighted score (ties to
    lower id).
    """
    if k <= 0 or not scores:
        return []
    by_rank = sorted(scores, key=lambda s: (-s.weighted, s.sample_id))
    quota = k // n_classes
    taken: list[UncertaintyScore] = []
    taken_ids: set[int] = set()
    if quota > 0:
        per_class: dict[int, int] = {}
        for s in by_rank:
            c = s.predicted_class
            if per_class.get(c, 0) < quota:
                per_class[c] = per_class.get(c, 0) + 1
                taken.append(s)
                taken_ids.add(s.sample_id)
    for s in by_rank:
        if len(taken) >= k:
            break
        if s.sample_id not in taken_ids:
            taken.append(s)
            taken_ids.add(s.sample_id)
    taken.sort(key=lambda s: (-s.weighted, s.sample_id))
    return [s.sample_id for s in taken]
