import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from labelloop.uncertainty import (
    UncertaintyScore,
    build_neighbor_index,
    cosine_similarity,
    density_weight,
    entropy_score,
    score_uncertainty,
    select_balanced,
)


def random_simplex(rng, n, c):
    raw = rng.uniform(0.01, 1.0, size=(n, c))
    return raw / raw.sum(axis=1, keepdims=True)


# --- entropy ------------------------------------------------------------------

def test_entropy_one_hot_zero():
    assert entropy_score(np.array([0.0, 1.0, 0.0])) == 0.0


def test_entropy_uniform_is_log_nc():
    for c in (2, 3, 5):
        h = entropy_score(np.full(c, 1.0 / c))
        assert h == pytest.approx(np.log(c), abs=1e-12)


def test_entropy_known_value():
    assert entropy_score(np.array([0.8, 0.2])) == \
        pytest.approx(0.5004024235381879, abs=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_entropy_bounded_and_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    p = random_simplex(rng, 1, 4)[0]
    h = entropy_score(p)
    assert 0 <= h <= np.log(4) + 1e-12
    assert entropy_score(p[::-1]) == pytest.approx(h, abs=1e-12)


# --- cosine ---------------------------------------------------------------------

def test_cosine_identical_vectors():
    v = np.array([0.3, -1.2, 4.0])
    assert cosine_similarity(v, v) == pytest.approx(1.0, abs=1e-12)


def test_cosine_orthogonal():
    assert cosine_similarity(np.array([1.0, 0.0]), np.array([0.0, 2.0])) == 0.0


def test_cosine_known_value():
    got = cosine_similarity(np.array([1.0, 2.0, 3.0]), np.array([4.0, 5.0, 6.0]))
    assert got == pytest.approx(0.9746318461970762, abs=1e-12)


def test_cosine_zero_vector_defined_as_zero():
    assert cosine_similarity(np.zeros(3), np.array([1.0, 2.0, 3.0])) == 0.0


def test_cosine_rejects_mismatch():
    with pytest.raises(ValueError):
        cosine_similarity(np.ones(2), np.ones(3))


# --- neighbor index / density ----------------------------------------------------

def test_never_own_neighbor():
    reps = np.random.default_rng(0).standard_normal((12, 4))
    idx = build_neighbor_index(np.arange(12), reps, m=5)
    for i in range(12):
        assert i not in idx.neighbor_ids[i]
        assert idx.neighbor_ids.shape[1] == 5


def test_neighbor_list_truncates_to_pool():
    reps = np.random.default_rng(1).standard_normal((4, 3))
    idx = build_neighbor_index(np.arange(4), reps, m=20)
    assert idx.neighbor_ids.shape[1] == 3


def test_density_identical_representations():
    reps = np.ones((6, 3))
    idx = build_neighbor_index(np.arange(6), reps, m=3)
    for i in range(6):
        assert density_weight(i, idx) == pytest.approx(1.0, abs=1e-12)


def test_density_orthogonal_representations():
    reps = np.eye(5)
    idx = build_neighbor_index(np.arange(5), reps, m=4)
    for i in range(5):
        assert density_weight(i, idx) == pytest.approx(0.0, abs=1e-12)


def test_density_singleton_pool_flagged_one():
    idx = build_neighbor_index(np.array([3]), np.ones((1, 4)), m=5)
    assert density_weight(3, idx) == 1.0


def test_density_matches_brute_force():
    rng = np.random.default_rng(2)
    reps = rng.standard_normal((30, 6))
    m = 5
    idx = build_neighbor_index(np.arange(30), reps, m=m)
    for i in range(30):
        sims = []
        for j in range(30):
            if j == i:
                continue
            u, v = reps[i], reps[j]
            sims.append(np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v)))
        sims.sort(reverse=True)
        expected = float(np.mean(sims[:m]))
        assert density_weight(i, idx) == pytest.approx(expected, abs=1e-12)


def test_weighted_score_is_product():
    rng = np.random.default_rng(3)
    probs = random_simplex(rng, 10, 3)
    reps = rng.standard_normal((10, 4))
    scores = score_uncertainty(np.arange(10), probs, reps, m=4)
    for s in scores:
        assert s.weighted == pytest.approx(s.entropy * s.density_weight, abs=0)
        assert -1.0 <= s.density_weight <= 1.0
        assert 0.0 <= s.entropy <= np.log(3) + 1e-12


def test_outlier_demoted():
    # 50 near-duplicates plus one isolated point, all with equal entropy:
    # the isolated point's weighted score must be strictly lowest
    rng = np.random.default_rng(4)
    cluster = np.tile(np.array([1.0, 1.0, 0.0]), (50, 1))
    cluster += 0.01 * rng.standard_normal(cluster.shape)
    outlier = np.array([[-5.0, 4.0, 8.0]])
    reps = np.concatenate([cluster, outlier])
    probs = np.tile(np.array([0.5, 0.5]), (51, 1))
    scores = score_uncertainty(np.arange(51), probs, reps, m=10)
    weighted = [s.weighted for s in scores]
    assert np.argmin(weighted) == 50


# --- balanced selection ------------------------------------------------------------

def us(i, w, c):
    return UncertaintyScore(sample_id=i, entropy=abs(w), density_weight=1.0,
                            weighted=w, predicted_class=c)


def test_balanced_quota_two_per_class():
    scores = [us(0, 0.9, 0), us(1, 0.8, 0), us(2, 0.7, 0),
              us(3, 0.6, 1), us(4, 0.5, 1), us(5, 0.4, 1)]
    got = select_balanced(scores, k=4, n_classes=2)
    assert set(got) == {0, 1, 3, 4}


def test_balanced_redistribution_when_class_empty():
    scores = [us(0, 0.9, 0), us(1, 0.8, 0), us(2, 0.7, 0), us(3, 0.6, 0)]
    got = select_balanced(scores, k=4, n_classes=2)
    # class 1 has no members: 2 by quota + 2 more by redistribution
    assert set(got) == {0, 1, 2, 3}


def test_balanced_total_never_exceeds_k():
    scores = [us(i, 1.0 - i * 0.01, i % 3) for i in range(20)]
    got = select_balanced(scores, k=7, n_classes=3)
    assert len(got) == 7
    # per-class quota floor(7/3)=2 filled before redistribution
    classes = {i % 3 for i in got}
    assert classes == {0, 1, 2}


def brute_force_balanced(scores, k, n_classes):
    """Independent reference: per-class quota then global redistribution."""
    quota = k // n_classes
    ranked = sorted(scores, key=lambda s: (-s.weighted, s.sample_id))
    chosen = []
    for c in range(n_classes):
        chosen.extend([s for s in ranked if s.predicted_class == c][:quota])
    chosen_ids = {s.sample_id for s in chosen}
    for s in ranked:
        if len(chosen) >= k:
            break
        if s.sample_id not in chosen_ids:
            chosen.append(s)
            chosen_ids.add(s.sample_id)
    return {s.sample_id for s in chosen}


@pytest.mark.parametrize("seed", range(6))
def test_balanced_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 200))
    n_classes = int(rng.integers(2, 5))
    scores = [
        us(i, float(rng.uniform(0, 1)), int(rng.integers(0, n_classes)))
        for i in range(n)
    ]
    k = int(rng.integers(1, n + 3))
    got = set(select_balanced(scores, k, n_classes))
    assert got == brute_force_balanced(scores, k, n_classes)
    assert len(got) <= k


def test_balanced_k_zero_empty():
    assert select_balanced([us(0, 0.5, 0)], 0, 2) == []
