"""Consensus-clustering choice of the number of functional units.

Every candidate ``k`` is factorised and clustered ``runs`` times from
different seeds. The co-clustering frequencies form the consensus matrix and
its dispersion ``rho = mean(4 (c - 1/2)^2)`` scores how reproducible the
partition is; the most reproducible ``k`` wins.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .cluster import ClusteringError, affinity, normalized_cut
from .core_io import make_rng
from .factorize import FactorizeConfig, factorize
from .graph import NeighborGraph

logger = logging.getLogger(__name__)


class SelectionError(RuntimeError):
    pass


def connectivity_matrix(labels) -> np.ndarray:
    labels = np.asarray(labels)
    return (labels[:, None] == labels[None, :]).astype(np.float64)


def consensus_matrix(label_runs) -> np.ndarray:
    label_runs = list(label_runs)
    if not label_runs:
        raise ValueError("need at least one clustering run")
    acc = np.zeros((len(label_runs[0]),) * 2)
    for labels in label_runs:
        acc += connectivity_matrix(labels)
    return acc / len(label_runs)


def dispersion(c) -> float:
    c = np.asarray(c, dtype=np.float64)
    n = c.shape[0]
    return float(np.sum(4.0 * (c - 0.5) ** 2) / (n * n))


@dataclass
class SelectionResult:
    best_k: int
    dispersion: dict  # k -> rho
    consensus: dict = field(repr=False)  # k -> (n, n) matrix
    runs: int = 0

    def table(self):
        return [(k, self.dispersion[k]) for k in sorted(self.dispersion)]

    def to_json(self) -> dict:
        return {
            "best_k": self.best_k,
            "runs": self.runs,
            "dispersion": {str(k): rho for k, rho in self.table()},
        }

    def to_csv(self) -> str:
        return "k,rho\n" + "".join(f"{k},{rho!r}\n" for k, rho in self.table())


def cluster_once(U, k: int, g: NeighborGraph | None, cfg: FactorizeConfig, sigma: float,
                 rng, rank: int | None = None, squared: bool = False) -> np.ndarray:
    """Factorise then normalized-cut ``U`` into ``k`` groups with one stream."""
    rng = make_rng(rng)
    rank = rank or min(k, *U.shape)
    fac = factorize(U, rank, g, cfg, rng=rng)
    return normalized_cut(affinity(fac.w, sigma, squared=squared), k, rng=rng)


def select_k(U, g: NeighborGraph | None, k_range=range(2, 6), runs: int = 30,
             cfg: FactorizeConfig | None = None, master_seed: int = 0, sigma: float = 0.01,
             rank: int | None = None, squared: bool = False) -> SelectionResult:
    """Pick the ``k`` whose consensus matrix has the largest dispersion.

    Run ``r`` of candidate ``k`` draws its stream from
    ``(master_seed, k, r, attempt)``; a failed run is retried once with
    ``attempt = 1``. Ties go to the smaller ``k``.
    """
    ks = sorted(int(k) for k in k_range)
    if not ks:
        raise ValueError("k_range is empty")
    if runs < 2:
        raise ValueError("need at least two runs")
    cfg = cfg or FactorizeConfig()
    U = np.asarray(U, dtype=np.float64)

    rhos, mats = {}, {}
    for k in ks:
        label_runs = []
        for r in range(runs):
            for attempt in (0, 1):
                try:
                    labels = cluster_once(U, k, g, cfg, sigma, make_rng(master_seed, k, r, attempt),
                                          rank=rank, squared=squared)
                    break
                except (ClusteringError, FloatingPointError, np.linalg.LinAlgError) as exc:
                    if attempt:
                        raise SelectionError(f"k={k} run={r} failed twice: {exc}") from exc
                    logger.warning("k=%d run=%d failed (%s); retrying", k, r, exc)
            label_runs.append(labels)
        mats[k] = consensus_matrix(label_runs)
        rhos[k] = dispersion(mats[k])
        logger.info("k=%d rho=%.6f", k, rhos[k])

    best = ks[0]
    for k in ks[1:]:
        if rhos[k] > rhos[best]:
            best = k
    return SelectionResult(best, rhos, mats, runs)
