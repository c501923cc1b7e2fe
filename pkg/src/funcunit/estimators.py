"""scikit-learn compatible wrappers.

Estimators follow the sklearn sample layout: ``X`` has one row per tissue
point, so the feature matrix ``U`` of the functional API is ``X.T`` and the
weighting map ``W`` comes back as ``embedding_ = W.T``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .cluster import affinity, kmeans_labels, normalized_cut
from .core_io import make_rng
from .factorize import FactorizeConfig, factorize, update_w
from .features import build_feature_matrix
from .graph import knn_heat_graph
from .select import select_k


def _check_random_state(random_state):
    return 0 if random_state is None else random_state


class MotionFeatures(TransformerMixin, BaseEstimator):
    """Trajectories ``(P, L, 3)`` -> features ``(P, 4(L-1))``."""

    def __init__(self, rescale=True):
        self.rescale = rescale

    def fit(self, X, y=None):
        X = check_array(X, allow_nd=True, ensure_2d=False)
        self.n_frames_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_frames_")
        X = check_array(X, allow_nd=True, ensure_2d=False)
        if X.shape[1] != self.n_frames_:
            raise ValueError(f"fitted on {self.n_frames_} frames, got {X.shape[1]}")
        return build_feature_matrix(X, rescale=self.rescale).T


class GraphSparseNMF(TransformerMixin, BaseEstimator):
    """Non-negative factorisation with L1/2 sparsity and a k-NN graph penalty.

    Parameters
    ----------
    n_components : int
        Inner rank K.
    eta : float
        Weight of the L1/2 penalty on the weighting map.
    lam : float
        Weight of the graph Laplacian penalty.
    n_neighbors : int
        Neighbours per sample in the heat-kernel graph.
    bandwidth : float or "auto"
        Heat-kernel width.
    max_iter, tol : int, float
        Iteration budget and relative-cost stopping tolerance.
    random_state : int or numpy Generator

    Attributes
    ----------
    components_ : ndarray (n_components, n_features)
        Building blocks, ``V.T``.
    embedding_ : ndarray (n_samples, n_components)
        Weighting map of the training data, ``W.T``.
    graph_ : NeighborGraph
    cost_trace_ : list of float
    n_iter_ : int
    """

    def __init__(self, n_components=2, eta=100.0, lam=100.0, n_neighbors=5,
                 bandwidth="auto", max_iter=500, tol=1e-6, w_floor=1e-9, random_state=None):
        self.n_components = n_components
        self.eta = eta
        self.lam = lam
        self.n_neighbors = n_neighbors
        self.bandwidth = bandwidth
        self.max_iter = max_iter
        self.tol = tol
        self.w_floor = w_floor
        self.random_state = random_state

    def _config(self):
        return FactorizeConfig(eta=self.eta, lam=self.lam, max_iters=self.max_iter,
                               rel_tol=self.tol, w_floor=self.w_floor)

    def fit(self, X, y=None):
        self.fit_transform(X)
        return self

    def fit_transform(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        U = X.T
        self.graph_ = knn_heat_graph(U, self.n_neighbors, self.bandwidth) if self.lam else None
        fac = factorize(U, self.n_components, self.graph_, self._config(),
                        rng=_check_random_state(self.random_state))
        self.components_ = fac.v.T
        self.embedding_ = fac.w.T
        self.cost_trace_ = fac.cost_trace
        self.n_iter_ = fac.n_iter
        self.n_features_in_ = X.shape[1]
        return self.embedding_

    def transform(self, X):
        """Weighting map of new samples with the building blocks held fixed."""
        check_is_fitted(self, "components_")
        X = check_array(X, dtype=np.float64)
        U = X.T
        V = self.components_.T
        g = knn_heat_graph(U, self.n_neighbors, self.bandwidth) if self.lam else None
        rng = make_rng(_check_random_state(self.random_state))
        W = rng.random((V.shape[1], U.shape[1])) + self.w_floor
        for _ in range(self.max_iter):
            W = update_w(U, V, W, g, self.eta, self.lam, self.w_floor)
        return W.T


class NormalizedCutClustering(ClusterMixin, BaseEstimator):
    """Spectral clustering of rows with ``exp(-||a - b|| / sigma)`` affinity."""

    def __init__(self, n_clusters=2, sigma=0.01, squared=False, random_state=None):
        self.n_clusters = n_clusters
        self.sigma = sigma
        self.squared = squared
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        if self.n_clusters == 1:
            self.labels_ = np.zeros(X.shape[0], dtype=np.int64)
            return self
        self.affinity_matrix_ = affinity(X.T, self.sigma, squared=self.squared)
        self.labels_ = normalized_cut(self.affinity_matrix_, self.n_clusters,
                                      rng=_check_random_state(self.random_state))
        return self


class KMeansBaseline(ClusterMixin, BaseEstimator):
    def __init__(self, n_clusters=2, random_state=None):
        self.n_clusters = n_clusters
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.labels_ = kmeans_labels(X, self.n_clusters, _check_random_state(self.random_state))
        return self


class FunctionalUnits(ClusterMixin, BaseEstimator):
    """Graph-regularised sparse NMF followed by a normalized cut.

    ``n_components`` defaults to ``min(n_clusters, n_features)``. Set
    ``clusterer="kmeans"`` to cluster the weighting map with plain k-means.
    """

    def __init__(self, n_clusters=2, n_components=None, eta=100.0, lam=100.0, sigma=0.01,
                 n_neighbors=5, bandwidth="auto", max_iter=500, tol=1e-6, squared=False,
                 clusterer="ncut", random_state=None):
        self.n_clusters = n_clusters
        self.n_components = n_components
        self.eta = eta
        self.lam = lam
        self.sigma = sigma
        self.n_neighbors = n_neighbors
        self.bandwidth = bandwidth
        self.max_iter = max_iter
        self.tol = tol
        self.squared = squared
        self.clusterer = clusterer
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        if self.clusterer not in ("ncut", "kmeans"):
            raise ValueError(f"unknown clusterer {self.clusterer!r}")
        rng = make_rng(_check_random_state(self.random_state))
        rank = self.n_components or min(self.n_clusters, *X.shape)
        self.nmf_ = GraphSparseNMF(rank, self.eta, self.lam, self.n_neighbors, self.bandwidth,
                                   self.max_iter, self.tol, random_state=rng)
        emb = self.nmf_.fit_transform(X)
        if self.n_clusters == 1:
            self.labels_ = np.zeros(X.shape[0], dtype=np.int64)
        elif self.clusterer == "ncut":
            self.labels_ = normalized_cut(affinity(emb.T, self.sigma, self.squared),
                                          self.n_clusters, rng=rng)
        else:
            self.labels_ = kmeans_labels(emb, self.n_clusters, rng)
        return self


class ConsensusKSelector(BaseEstimator):
    """Choose the number of clusters by consensus dispersion.

    Attributes
    ----------
    best_k_ : int
    dispersion_ : dict mapping k to rho
    consensus_ : dict mapping k to the (n, n) consensus matrix
    """

    def __init__(self, k_range=(2, 3, 4, 5), runs=30, eta=100.0, lam=100.0, sigma=0.01,
                 n_neighbors=5, bandwidth="auto", max_iter=500, tol=1e-6, random_state=None):
        self.k_range = k_range
        self.runs = runs
        self.eta = eta
        self.lam = lam
        self.sigma = sigma
        self.n_neighbors = n_neighbors
        self.bandwidth = bandwidth
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        U = X.T
        g = knn_heat_graph(U, self.n_neighbors, self.bandwidth) if self.lam else None
        cfg = FactorizeConfig(eta=self.eta, lam=self.lam, max_iters=self.max_iter, rel_tol=self.tol)
        seed = _check_random_state(self.random_state)
        res = select_k(U, g, self.k_range, self.runs, cfg, int(seed), self.sigma)
        self.result_ = res
        self.best_k_ = res.best_k
        self.dispersion_ = res.dispersion
        self.consensus_ = res.consensus
        return self
