import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from funcunit.graph import knn_heat_graph, laplacian_quadratic, laplacian_trace, save_edges_csv


def _brute_graph(U, k, t):
    """Dense double-loop construction."""
    X = U.T
    n = X.shape[0]
    D2 = np.array([[np.sum((X[i] - X[j]) ** 2) for j in range(n)] for i in range(n)])
    adj = np.zeros((n, n), dtype=bool)
    for i in range(n):
        order = [j for j in np.argsort(D2[i], kind="stable") if j != i][:k]
        adj[i, order] = True
    adj |= adj.T
    if t == "auto":
        t = D2[np.triu(adj, 1)].mean()
    return np.where(adj, np.exp(-D2 / t), 0.0), t


def test_matches_brute_force(rng):
    U = rng.random((4, 30))
    g = knn_heat_graph(U, 3)
    Q, t = _brute_graph(U, 3, "auto")
    assert g.bandwidth == pytest.approx(t, rel=1e-12)
    np.testing.assert_allclose(g.q.toarray(), Q, rtol=1e-12, atol=0)
    np.testing.assert_allclose(g.d, Q.sum(axis=1), rtol=1e-12)


def test_duplicate_columns_weight_one():
    U = np.array([[0.0, 0.0, 1.0, 5.0, 9.0], [0.0, 0.0, 2.0, 1.0, 3.0]])
    g = knn_heat_graph(U, 1, bandwidth=2.0)
    assert g.q[0, 1] == 1.0
    assert g.q.diagonal().sum() == 0


def test_too_few_columns():
    with pytest.raises(ValueError):
        knn_heat_graph(np.ones((2, 5)), 5)


def test_quadratic_length_mismatch(rng):
    g = knn_heat_graph(rng.random((3, 10)), 2)
    with pytest.raises(ValueError):
        laplacian_quadratic(np.ones(9), g)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(8, 40), st.integers(1, 6))
def test_laplacian_identities(seed, n, k):
    r = np.random.default_rng(seed)
    g = knn_heat_graph(r.random((3, n)), min(k, n - 1))
    L = g.laplacian().toarray()
    np.testing.assert_allclose(L, L.T, atol=0)
    assert np.max(np.abs(L.sum(axis=1))) < 1e-12
    x = r.normal(size=n)
    assert laplacian_quadratic(x, g) >= -1e-9
    Q = g.q.toarray()
    W = r.random((3, n))
    pair = 0.5 * sum(Q[i, j] * np.sum((W[:, i] - W[:, j]) ** 2) for i in range(n) for j in range(n))
    assert laplacian_trace(W, g) == pytest.approx(pair, rel=1e-10, abs=1e-12)


def test_edges_csv(tmp_path, rng):
    g = knn_heat_graph(rng.random((2, 12)), 2)
    p = tmp_path / "e.csv"
    save_edges_csv(g, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "i,j,weight"
    assert len(lines) - 1 == g.q.nnz // 2
    i, j, w = lines[1].split(",")
    assert int(i) < int(j) and float(w) == g.q[int(i), int(j)]
