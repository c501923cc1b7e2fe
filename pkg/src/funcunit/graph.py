"""k-nearest-neighbour heat-kernel graph over feature columns."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree


@dataclass(frozen=True)
class NeighborGraph:
    """Symmetric sparse weights ``q`` with zero diagonal and degrees ``d``.

    The Laplacian ``L = diag(d) - q`` is never formed densely.
    """

    q: sp.csr_matrix
    d: np.ndarray
    n_neighbors: int
    bandwidth: float

    @property
    def n(self) -> int:
        return self.q.shape[0]

    def laplacian(self) -> sp.csr_matrix:
        return (sp.diags(self.d) - self.q).tocsr()

    def edges(self):
        """Upper-triangle edge list as ``(i, j, weight)`` arrays."""
        upper = sp.triu(self.q, k=1).tocoo()
        order = np.lexsort((upper.col, upper.row))
        return upper.row[order], upper.col[order], upper.data[order]


def knn_heat_graph(U, n_neighbors: int = 5, bandwidth="auto") -> NeighborGraph:
    """Build the heat-kernel graph on the columns of ``U``.

    ``i ~ j`` when either is among the other's ``n_neighbors`` nearest
    columns (Euclidean). The weight is ``exp(-||u_i - u_j||^2 / t)``. With
    ``bandwidth="auto"``, ``t`` is the mean squared edge length (1 when all
    edges have length zero).
    """
    U = np.asarray(U, dtype=np.float64)
    X = U.T
    n = X.shape[0]
    if n_neighbors < 1:
        raise ValueError("n_neighbors must be positive")
    if n <= n_neighbors:
        raise ValueError(f"need more than {n_neighbors} columns, got {n}")

    # Ask for one extra hit so the query point itself can be discarded;
    # with duplicate columns it may not come back first.
    dist, idx = cKDTree(X).query(X, k=n_neighbors + 1)
    rows, cols = [], []
    for i in range(n):
        nbrs = [j for j in idx[i] if j != i][:n_neighbors]
        rows.extend([i] * len(nbrs))
        cols.extend(nbrs)
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)

    lo, hi = np.minimum(rows, cols), np.maximum(rows, cols)
    pairs = np.unique(np.stack([lo, hi], axis=1), axis=0)
    i, j = pairs[:, 0], pairs[:, 1]
    d2 = np.sum((X[i] - X[j]) ** 2, axis=1)

    if bandwidth == "auto" or bandwidth is None:
        t = float(d2.mean()) if d2.size and d2.mean() > 0 else 1.0
    else:
        t = float(bandwidth)
        if t <= 0:
            raise ValueError("bandwidth must be positive")
    w = np.exp(-d2 / t)

    q = sp.coo_matrix(
        (np.concatenate([w, w]), (np.concatenate([i, j]), np.concatenate([j, i]))),
        shape=(n, n),
    ).tocsr()
    q.sort_indices()
    d = np.asarray(q.sum(axis=1)).ravel()
    return NeighborGraph(q=q, d=d, n_neighbors=n_neighbors, bandwidth=t)


def laplacian_quadratic(w, g: NeighborGraph) -> float:
    """``w^T L w`` for one row of the weighting map."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (g.n,):
        raise ValueError(f"vector length {w.shape} does not match graph size {g.n}")
    return float(w @ (g.d * w) - w @ (g.q @ w))


def laplacian_trace(W, g: NeighborGraph) -> float:
    """``Tr(W L W^T)`` for a ``K x n`` weighting map."""
    W = np.asarray(W, dtype=np.float64)
    if W.shape[1] != g.n:
        raise ValueError(f"W has {W.shape[1]} columns, graph has {g.n} nodes")
    WQ = (g.q @ W.T).T
    return float(np.sum(W * (W * g.d)) - np.sum(W * WQ))


def save_edges_csv(g: NeighborGraph, path) -> None:
    i, j, w = g.edges()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("i,j,weight\n")
        for a, b, c in zip(i, j, w):
            fh.write(f"{a},{b},{float(c)!r}\n")
