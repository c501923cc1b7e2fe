"""Graph-regularised sparse NMF with multiplicative updates.

Minimises::

    1/2 ||U - V W||_F^2 + lambda/2 Tr(W L W^T) + eta ||W||_{1/2}

with ``||W||_{1/2} = (sum sqrt(w_ij))^2`` and ``L = D - Q`` from a
:class:`~funcunit.graph.NeighborGraph`. With ``eta = lambda = 0`` the updates
are the classic Lee-Seung Frobenius rules.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core_io import make_rng
from .graph import NeighborGraph, laplacian_trace

logger = logging.getLogger(__name__)

DENOM_EPS = 1e-12
W_FLOOR = 1e-9


@dataclass
class FactorizeConfig:
    eta: float = 100.0
    lam: float = 100.0
    max_iters: int = 500
    rel_tol: float = 1e-6
    w_floor: float = W_FLOOR
    # number of iterations the relative cost change is measured over
    tol_window: int = 10

    def __post_init__(self):
        if self.eta < 0 or self.lam < 0:
            raise ValueError("eta and lambda must be non-negative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if self.w_floor <= 0:
            raise ValueError("w_floor must be positive")


@dataclass
class Factorization:
    v: np.ndarray
    w: np.ndarray
    cost_trace: list = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False

    @property
    def rank(self) -> int:
        return self.v.shape[1]


def _check_shapes(U, V, W):
    U, V, W = (np.asarray(a, dtype=np.float64) for a in (U, V, W))
    if U.ndim != 2 or V.ndim != 2 or W.ndim != 2:
        raise ValueError("U, V and W must be 2-D")
    if V.shape[0] != U.shape[0] or W.shape[1] != U.shape[1] or V.shape[1] != W.shape[0]:
        raise ValueError(f"incompatible shapes U{U.shape} V{V.shape} W{W.shape}")
    return U, V, W


def frobenius_cost(U, V, W) -> float:
    U, V, W = _check_shapes(U, V, W)
    R = U - V @ W
    return float(np.sum(R * R))


def l_half_norm(W) -> float:
    W = np.asarray(W, dtype=np.float64)
    if np.any(W < 0):
        raise ValueError("L1/2 norm is defined for non-negative matrices only")
    return float(np.sum(np.sqrt(W)) ** 2)


def total_cost(U, V, W, g: NeighborGraph | None, eta: float, lam: float) -> float:
    cost = 0.5 * frobenius_cost(U, V, W)
    if lam:
        if g is None:
            raise ValueError("lambda > 0 needs a neighbour graph")
        cost += 0.5 * lam * laplacian_trace(W, g)
    if eta:
        cost += eta * l_half_norm(W)
    return cost


def update_v(U, V, W) -> np.ndarray:
    """``V <- V * (U W^T) / (V W W^T)``."""
    U, V, W = _check_shapes(U, V, W)
    return V * (U @ W.T) / (V @ (W @ W.T) + DENOM_EPS)


def update_w(U, V, W, g: NeighborGraph | None, eta: float, lam: float,
             w_floor: float = W_FLOOR) -> np.ndarray:
    """One multiplicative step on the weighting map.

    ``W <- W * (V^T U + lam W Q) / (V^T V W + eta/2 W^{-1/2} + lam W D)``,
    with ``W`` floored at ``w_floor`` first so ``W^{-1/2}`` stays finite.
    """
    U, V, W = _check_shapes(U, V, W)
    W = np.maximum(W, w_floor)
    num = V.T @ U
    den = (V.T @ V) @ W
    if eta:
        den = den + 0.5 * eta / np.sqrt(W)
    if lam:
        if g is None:
            raise ValueError("lambda > 0 needs a neighbour graph")
        num = num + lam * (g.q @ W.T).T  # Q symmetric: W Q = (Q W^T)^T
        den = den + lam * (W * g.d)
    return W * num / (den + DENOM_EPS)


def init_factors(U, rank: int, rng, w_floor: float = W_FLOOR):
    m, n = U.shape
    scale = np.sqrt(U.mean() / rank) if U.mean() > 0 else 1.0
    # uniform on (w_floor, 1]
    V = (w_floor + (1.0 - w_floor) * (1.0 - rng.random((m, rank)))) * scale
    W = (w_floor + (1.0 - w_floor) * (1.0 - rng.random((rank, n)))) * scale
    return V, W


def factorize(U, rank: int, g: NeighborGraph | None = None, cfg: FactorizeConfig | None = None,
              rng=0, V0=None, W0=None) -> Factorization:
    """Alternate :func:`update_v` and :func:`update_w` until converged.

    Stops after ``cfg.max_iters`` iterations or once the relative change in
    total cost over the last ``cfg.tol_window`` iterations drops below
    ``cfg.rel_tol``. ``cost_trace[0]`` is the cost of the initial factors.
    """
    cfg = cfg or FactorizeConfig()
    U = np.asarray(U, dtype=np.float64)
    if U.ndim != 2:
        raise ValueError("U must be 2-D")
    if np.any(U < 0):
        raise ValueError("U must be non-negative")
    if not np.all(np.isfinite(U)):
        raise ValueError("U contains non-finite values")
    m, n = U.shape
    if not 1 <= rank <= min(m, n):
        raise ValueError(f"rank must be in 1..{min(m, n)}, got {rank}")
    if cfg.lam and g is None:
        raise ValueError("lambda > 0 needs a neighbour graph")

    rng = make_rng(rng)
    V, W = init_factors(U, rank, rng, cfg.w_floor)
    if V0 is not None:
        V = np.array(V0, dtype=np.float64)
    if W0 is not None:
        W = np.array(W0, dtype=np.float64)

    trace = [total_cost(U, V, W, g, cfg.eta, cfg.lam)]
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        V = update_v(U, V, W)
        W = update_w(U, V, W, g, cfg.eta, cfg.lam, cfg.w_floor)
        trace.append(total_cost(U, V, W, g, cfg.eta, cfg.lam))
        if not (np.all(np.isfinite(V)) and np.all(np.isfinite(W))):
            raise FloatingPointError(f"non-finite factors at iteration {it}")
        if it >= cfg.tol_window:
            prev = trace[-1 - cfg.tol_window]
            if abs(prev - trace[-1]) <= cfg.rel_tol * abs(prev):
                converged = True
                break

    increases = int(np.sum(np.diff(trace) > 1e-10 * np.abs(trace[:-1])))
    if increases:
        logger.debug("total cost increased on %d of %d iterations", increases, it)
    return Factorization(v=V, w=W, cost_trace=trace, n_iter=it, converged=converged)


def sparsity_fraction(W, w_floor: float = W_FLOOR) -> float:
    """Fraction of entries at or below ``10 * w_floor``."""
    return float(np.mean(np.asarray(W) <= 10 * w_floor))
