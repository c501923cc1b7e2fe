"""Functional-unit discovery in dense motion data.

Graph-regularised sparse NMF of motion features followed by spectral
clustering, consensus model selection, synthetic benchmarks and a
phase-based demons tracker.
"""

__version__ = "0.1.0"

from .cluster import affinity, clustering_accuracy, normalized_cut
from .core_io import load_labels, load_tensor, make_rng, save_labels, save_tensor
from .estimators import (
    ConsensusKSelector,
    FunctionalUnits,
    GraphSparseNMF,
    KMeansBaseline,
    MotionFeatures,
    NormalizedCutClustering,
)
from .factorize import Factorization, FactorizeConfig, factorize
from .features import build_feature_matrix
from .graph import NeighborGraph, knn_heat_graph
from .select import dispersion, select_k
from .synth import synth_2d, synth_3d
from .tracking import register_pair, synth_phases

__all__ = [
    "ConsensusKSelector",
    "Factorization",
    "FactorizeConfig",
    "FunctionalUnits",
    "GraphSparseNMF",
    "KMeansBaseline",
    "MotionFeatures",
    "NeighborGraph",
    "NormalizedCutClustering",
    "affinity",
    "build_feature_matrix",
    "clustering_accuracy",
    "dispersion",
    "factorize",
    "knn_heat_graph",
    "load_labels",
    "load_tensor",
    "make_rng",
    "normalized_cut",
    "save_labels",
    "save_tensor",
    "register_pair",
    "select_k",
    "synth_2d",
    "synth_3d",
    "synth_phases",
]
