"""Spectral clustering of weighting-map columns and the accuracy metric."""

from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.sparse.linalg
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist
from sklearn.cluster import KMeans

from .core_io import make_rng

# above this size the embedding comes from ARPACK instead of a full eigh
DENSE_EIGH_MAX = 1500


class ClusteringError(RuntimeError):
    pass


def affinity(W, sigma: float, squared: bool = False) -> np.ndarray:
    """``A_ij = exp(-||w_i - w_j||_2 / sigma)`` over the columns of ``W``.

    The distance is not squared unless ``squared=True``.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    X = np.asarray(W, dtype=np.float64).T
    D = cdist(X, X, metric="sqeuclidean" if squared else "euclidean")
    A = np.exp(-D / sigma)
    A = 0.5 * (A + A.T)
    np.fill_diagonal(A, 1.0)
    return A


def spectral_embedding(A, k: int) -> np.ndarray:
    """Row-normalised eigenvectors of the ``k`` smallest eigenvalues of
    ``I - D^{-1/2} A D^{-1/2}``."""
    A = np.asarray(A, dtype=np.float64)
    n = A.shape[0]
    d = A.sum(axis=1)
    if np.any(d <= 0):
        raise ClusteringError("affinity has a node with zero degree")
    s = 1.0 / np.sqrt(d)
    M = A * s[:, None] * s[None, :]
    M = 0.5 * (M + M.T)
    # smallest eigenvalues of I - M are the largest of M
    try:
        if n <= DENSE_EIGH_MAX:
            _, vecs = scipy.linalg.eigh(M, subset_by_index=[n - k, n - 1])
        else:
            v0 = np.full(n, 1.0 / np.sqrt(n))
            _, vecs = scipy.sparse.linalg.eigsh(M, k=k, which="LA", v0=v0, tol=1e-10)
    except (np.linalg.LinAlgError, scipy.sparse.linalg.ArpackError) as exc:
        raise ClusteringError(f"eigensolver failed: {exc}") from exc
    norms = np.linalg.norm(vecs, axis=1, keepdims=True)
    out = np.zeros_like(vecs)
    np.divide(vecs, norms, out=out, where=norms > 0)
    return out


def kmeans_labels(X, k: int, rng=0, n_init: int = 10, max_iter: int = 100) -> np.ndarray:
    """k-means++ with restarts on the rows of ``X``; best inertia wins."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in 1..{n}")
    if k == 1:
        return np.zeros(n, dtype=np.int64)
    if k == n:
        return np.arange(n, dtype=np.int64)
    seed = int(make_rng(rng).integers(2**31 - 1))
    km = KMeans(n_clusters=k, init="k-means++", n_init=n_init, max_iter=max_iter,
                random_state=seed)
    labels = km.fit_predict(X).astype(np.int64)
    if np.unique(labels).size != k:
        raise ClusteringError(f"k-means left a cluster empty; try a smaller k than {k}")
    return canonical_labels(labels)


def normalized_cut(A, k: int, rng=0) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    n = A.shape[0]
    if not 2 <= k <= n:
        raise ValueError(f"k must be in 2..{n}, got {k}")
    if k == n:
        return np.arange(n, dtype=np.int64)
    return kmeans_labels(spectral_embedding(A, k), k, rng)


def canonical_labels(labels) -> np.ndarray:
    """Relabel so clusters are numbered by first appearance."""
    labels = np.asarray(labels)
    _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty_like(first)
    rank[np.argsort(first)] = np.arange(first.size)
    return rank[inv].astype(np.int64)


def contingency(pred, truth) -> np.ndarray:
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    _, p = np.unique(pred, return_inverse=True)
    _, t = np.unique(truth, return_inverse=True)
    table = np.zeros((p.max() + 1, t.max() + 1), dtype=np.int64)
    np.add.at(table, (p, t), 1)
    return table


def clustering_accuracy(pred, truth) -> float:
    """Best one-to-one label matching rate, in percent."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {truth.shape}")
    if pred.size == 0:
        return 100.0
    table = contingency(pred, truth)
    r, c = linear_sum_assignment(table, maximize=True)
    return 100.0 * table[r, c].sum() / pred.size
