import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from funcunit.cluster import (
    affinity,
    canonical_labels,
    clustering_accuracy,
    contingency,
    kmeans_labels,
    normalized_cut,
)


def brute_accuracy(pred, truth):
    """Try every injective relabelling of the predicted clusters."""
    ps, ts = np.unique(pred), np.unique(truth)
    slots = list(ts) + [None] * max(0, len(ps) - len(ts))
    best = 0
    for perm in itertools.permutations(slots, len(ps)):
        mapping = dict(zip(ps, perm))
        best = max(best, sum(mapping[p] == t for p, t in zip(pred, truth)))
    return 100.0 * best / len(pred)


def test_accuracy_example():
    assert clustering_accuracy([0, 0, 1, 1], [0, 1, 1, 1]) == 75.0


def test_accuracy_is_permutation_invariant():
    assert clustering_accuracy([2, 2, 0, 0, 1], [0, 0, 1, 1, 2]) == 100.0


def test_accuracy_length_mismatch():
    with pytest.raises(ValueError):
        clustering_accuracy([0, 1], [0])


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 15), st.integers(0, 2**32 - 1))
def test_accuracy_matches_brute_force(kp, kt, n, seed):
    r = np.random.default_rng(seed)
    pred, truth = r.integers(0, kp, n), r.integers(0, kt, n)
    assert clustering_accuracy(pred, truth) == pytest.approx(brute_accuracy(pred, truth), abs=1e-12)


def test_contingency_counts():
    np.testing.assert_array_equal(contingency([0, 0, 1, 1], [0, 1, 1, 1]), [[1, 1], [0, 2]])


def test_canonical_labels():
    np.testing.assert_array_equal(canonical_labels([5, 5, 2, 9, 2]), [0, 0, 1, 2, 1])


def test_affinity_properties(rng):
    W = rng.random((3, 9))
    A = affinity(W, 0.5)
    np.testing.assert_array_equal(A, A.T)
    np.testing.assert_array_equal(np.diag(A), 1.0)
    d = np.linalg.norm(W[:, 0] - W[:, 1])
    assert A[0, 1] == pytest.approx(np.exp(-d / 0.5), rel=1e-14)
    assert affinity(W, 0.5, squared=True)[0, 1] == pytest.approx(np.exp(-d * d / 0.5), rel=1e-13)
    with pytest.raises(ValueError):
        affinity(W, 0.0)


def _blobs(r, k=3, per=20):
    centres = np.eye(k) * 5
    X = np.vstack([c + 0.1 * r.normal(size=(per, k)) for c in centres])
    return X, np.repeat(np.arange(k), per)


def test_ncut_recovers_blobs(rng):
    X, y = _blobs(rng)
    labels = normalized_cut(affinity(X.T, 1.0), 3, rng=0)
    assert clustering_accuracy(labels, y) == 100.0


def test_ncut_deterministic(rng):
    X, _ = _blobs(rng)
    A = affinity(X.T, 1.0)
    np.testing.assert_array_equal(normalized_cut(A, 3, 4), normalized_cut(A, 3, 4))


def test_ncut_edge_cases(rng):
    A = affinity(rng.random((2, 5)), 1.0)
    np.testing.assert_array_equal(normalized_cut(A, 5), np.arange(5))
    with pytest.raises(ValueError):
        normalized_cut(A, 1)
    with pytest.raises(ValueError):
        normalized_cut(A, 6)


def test_kmeans_edge_cases(rng):
    X = rng.random((6, 2))
    np.testing.assert_array_equal(kmeans_labels(X, 1), np.zeros(6))
    np.testing.assert_array_equal(kmeans_labels(X, 6), np.arange(6))
    with pytest.raises(ValueError):
        kmeans_labels(X, 7)
