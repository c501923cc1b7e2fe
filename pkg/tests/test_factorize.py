import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from funcunit.factorize import (
    FactorizeConfig,
    factorize,
    frobenius_cost,
    init_factors,
    l_half_norm,
    sparsity_fraction,
    total_cost,
    update_v,
    update_w,
)
from funcunit.graph import knn_heat_graph


def oracle_v(U, V, W):
    m, K = V.shape
    n = U.shape[1]
    VW = [[sum(V[i, l] * W[l, j] for l in range(K)) for j in range(n)] for i in range(m)]
    out = np.empty_like(V)
    for i in range(m):
        for k in range(K):
            num = sum(U[i, j] * W[k, j] for j in range(n))
            den = sum(VW[i][j] * W[k, j] for j in range(n))
            out[i, k] = V[i, k] * num / (den + 1e-12)
    return out


def oracle_w(U, V, W, Q, eta, lam):
    m, K = V.shape
    n = U.shape[1]
    deg = [sum(Q[j, l] for l in range(n)) for j in range(n)]
    VW = [[sum(V[i, l] * W[l, j] for l in range(K)) for j in range(n)] for i in range(m)]
    out = np.empty_like(W)
    for k in range(K):
        for j in range(n):
            num = sum(V[i, k] * U[i, j] for i in range(m)) + lam * sum(W[k, l] * Q[l, j] for l in range(n))
            den = (sum(V[i, k] * VW[i][j] for i in range(m))
                   + 0.5 * eta / np.sqrt(W[k, j]) + lam * W[k, j] * deg[j])
            out[k, j] = W[k, j] * num / (den + 1e-12)
    return out


@pytest.mark.parametrize("seed", range(5))
def test_updates_match_elementwise_oracle(seed):
    r = np.random.default_rng(seed)
    U = r.random((6, 8)) * 10
    V, W = r.random((6, 3)) + 0.1, r.random((3, 8)) + 0.1
    g = knn_heat_graph(U, 2)
    np.testing.assert_allclose(update_v(U, V, W), oracle_v(U, V, W), rtol=1e-12, atol=0)
    np.testing.assert_allclose(update_w(U, V, W, g, 100.0, 1.0),
                               oracle_w(U, V, W, g.q.toarray(), 100.0, 1.0), rtol=1e-12, atol=0)


def test_l_half_examples():
    assert l_half_norm(np.ones((2, 2))) == 16.0
    assert l_half_norm([[4.0]]) == 4.0
    with pytest.raises(ValueError):
        l_half_norm([[-1.0]])


def test_total_cost_pieces(rng):
    U = rng.random((5, 12))
    V, W = rng.random((5, 2)), rng.random((2, 12))
    g = knn_heat_graph(U, 3)
    Q = g.q.toarray()
    L = np.diag(Q.sum(1)) - Q
    expect = 0.5 * np.sum((U - V @ W) ** 2) + 0.5 * 3.0 * np.trace(W @ L @ W.T) + 2.0 * np.sum(np.sqrt(W)) ** 2
    assert total_cost(U, V, W, g, 2.0, 3.0) == pytest.approx(expect, rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 30), st.integers(2, 30), st.integers(1, 6))
def test_plain_updates_never_increase_frobenius(seed, m, n, K):
    K = min(K, m, n)
    r = np.random.default_rng(seed)
    U = r.random((m, n))
    V, W = init_factors(U, K, r)
    prev = frobenius_cost(U, V, W)
    for _ in range(60):
        V = update_v(U, V, W)
        W = update_w(U, V, W, None, 0.0, 0.0)
        cur = frobenius_cost(U, V, W)
        assert cur <= prev * (1 + 1e-10) + 1e-300
        prev = cur


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 200), st.floats(0, 200))
def test_factors_stay_positive_and_finite(seed, eta, lam):
    r = np.random.default_rng(seed)
    U = r.random((8, 20)) * 10
    g = knn_heat_graph(U, 3)
    fac = factorize(U, 3, g, FactorizeConfig(eta=eta, lam=lam, max_iters=40), rng=r)
    assert np.all(fac.v >= 0) and np.all(fac.w > 0)
    assert np.all(np.isfinite(fac.v)) and np.all(np.isfinite(fac.w))
    assert len(fac.cost_trace) == fac.n_iter + 1


def test_factorize_is_deterministic(rng):
    U = rng.random((10, 30))
    g = knn_heat_graph(U, 4)
    a = factorize(U, 3, g, rng=5)
    b = factorize(U, 3, g, rng=5)
    np.testing.assert_array_equal(a.w, b.w)
    assert a.cost_trace == b.cost_trace


def test_converges_on_exact_low_rank():
    r = np.random.default_rng(3)
    U = r.random((12, 3)) @ r.random((3, 40))
    fac = factorize(U, 3, None, FactorizeConfig(eta=0, lam=0, max_iters=3000, rel_tol=1e-9), rng=1)
    assert frobenius_cost(U, fac.v, fac.w) < 1e-3 * np.sum(U * U)


def test_sparsity_grows_with_eta():
    r = np.random.default_rng(2024)
    U = r.random((40, 200)) * 10
    g = knn_heat_graph(U, 5)
    frac = [sparsity_fraction(factorize(U, 5, g, FactorizeConfig(eta=e, lam=100.0), rng=0).w)
            for e in (0.0, 50.0, 100.0)]
    assert frac[0] <= frac[1] <= frac[2]
    assert frac[2] > frac[0]


def test_errors(rng):
    U = rng.random((4, 10))
    with pytest.raises(ValueError):
        factorize(U, 5)
    with pytest.raises(ValueError):
        factorize(-U, 2, cfg=FactorizeConfig(lam=0))
    with pytest.raises(ValueError):
        factorize(U, 2, None, FactorizeConfig(lam=1.0))
    with pytest.raises(ValueError):
        FactorizeConfig(eta=-1)
    with pytest.raises(ValueError):
        update_v(U, np.ones((3, 2)), np.ones((2, 10)))


def test_warm_start_is_used(rng):
    U = rng.random((5, 12))
    V0, W0 = rng.random((5, 2)), rng.random((2, 12))
    fac = factorize(U, 2, None, FactorizeConfig(eta=0, lam=0, max_iters=1), V0=V0, W0=W0)
    V1 = update_v(U, V0, W0)
    np.testing.assert_allclose(fac.v, V1)
    np.testing.assert_allclose(fac.w, update_w(U, V1, W0, None, 0, 0))
