"""Accuracy comparison of the full method against simpler baselines."""

from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .cluster import clustering_accuracy
from .core_io import load_labels, load_tensor, n_labels
from .estimators import FunctionalUnits, KMeansBaseline, NormalizedCutClustering
from .features import build_feature_matrix
from .synth import synth_2d, synth_3d

METHODS = ("kmeans", "ncut", "gsnmf_kmeans", "gsnmf_ncut")

DEFAULT_PARAMS = {
    "synth3d": {"eta": 100.0, "lam": 100.0, "sigma": 0.01},
    "synth2d": {"eta": 10.0, "lam": 800.0, "sigma": 0.06},
    "files": {"eta": 100.0, "lam": 100.0, "sigma": 0.01},
}


@dataclass(frozen=True)
class BenchResult:
    dataset: str
    method: str
    k: int
    seed: int
    ac: float
    seconds: float


@dataclass
class LabelledData:
    """Feature matrix ``U`` (m x n) and ground truth for one seed."""

    name: str
    U: np.ndarray
    truth: np.ndarray

    @property
    def kind(self) -> str:
        return self.name.split(":", 1)[0]


def load_dataset(name: str, seed: int = 0) -> LabelledData:
    """Resolve ``synth3d:<A-D>``, ``synth2d:<k>`` or ``files:<tensor>,<labels>``.

    A rank-3 tensor is read as trajectories, a rank-2 tensor as a ready
    feature matrix with one column per sample.
    """
    kind, _, arg = name.partition(":")
    if kind == "synth3d":
        ds = synth_3d(arg or "A", rng=seed)
        return LabelledData(name, build_feature_matrix(ds.trajectories), ds.truth)
    if kind == "synth2d":
        ds = synth_2d(int(arg or 8), rng=seed)
        return LabelledData(name, build_feature_matrix(ds.trajectories), ds.truth)
    if kind == "files":
        tpath, _, lpath = arg.partition(",")
        t = load_tensor(tpath)
        U = build_feature_matrix(t) if t.ndim == 3 else t
        return LabelledData(name, U, load_labels(lpath))
    raise ValueError(f"unknown dataset {name!r}")


def auto_sigma(X) -> float:
    """Median pairwise distance between rows; the scale for raw-feature ncut."""
    d = pdist(X)
    d = d[d > 0]
    return float(np.median(d)) if d.size else 1.0


def _run_method(method, X, k, params, seed):
    if method == "kmeans":
        est = KMeansBaseline(k, random_state=seed)
    elif method == "ncut":
        sigma = params.get("ncut_sigma", "auto")
        est = NormalizedCutClustering(k, auto_sigma(X) if sigma == "auto" else float(sigma),
                                      random_state=seed)
    elif method in ("gsnmf_kmeans", "gsnmf_ncut"):
        est = FunctionalUnits(k, eta=params["eta"], lam=params["lam"], sigma=params["sigma"],
                              n_neighbors=params.get("n_neighbors", 5),
                              max_iter=params.get("max_iter", 500),
                              clusterer="kmeans" if method == "gsnmf_kmeans" else "ncut",
                              random_state=seed)
    else:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    return est.fit(X).labels_


def run_benchmark(dataset, methods=METHODS, k=None, params=None, seeds=(1, 2, 3, 4, 5)):
    """Run every method for every seed and score it against the truth.

    ``dataset`` is a dataset name for :func:`load_dataset` (regenerated per
    seed) or a ready :class:`LabelledData`. ``k`` defaults to the number of
    ground-truth labels.
    """
    methods = list(METHODS) if methods in (None, "all") else list(methods)
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; choose from {METHODS}")
    results = []
    for seed in seeds:
        data = load_dataset(dataset, seed) if isinstance(dataset, str) else dataset
        merged = {**DEFAULT_PARAMS.get(data.kind, DEFAULT_PARAMS["files"]), **(params or {})}
        kk = k or n_labels(data.truth)
        X = data.U.T
        for method in methods:
            t0 = time.perf_counter()
            if kk == 1:
                pred = np.zeros(X.shape[0], dtype=np.int64)
            else:
                pred = _run_method(method, X, kk, merged, seed)
            dt = time.perf_counter() - t0
            results.append(BenchResult(data.name, method, int(kk), int(seed),
                                       clustering_accuracy(pred, data.truth), dt))
    order = {m: i for i, m in enumerate(METHODS)}
    results.sort(key=lambda r: (r.dataset, order[r.method], r.seed))
    return results


def median_ac(results, method) -> float:
    return float(np.median([r.ac for r in results if r.method == method]))


def write_csv(results, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["dataset", "method", "k", "seed", "ac", "seconds"],
                           lineterminator="\n")
        w.writeheader()
        for r in results:
            w.writerow(asdict(r))
