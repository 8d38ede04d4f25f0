"""Training-distribution confidence gating for classifier predictions.

A prediction is trusted when enough training-set embeddings sit close to the
query embedding. This package builds the exact neighbour caches, sweeps the
acceptance threshold into confidence curves, scores them with the Normalized
Confidence Gain, tunes the neighbour count and combines several embedders.
"""
__version__ = "0.1.0"

from .model import (
    ConfidenceCurve,
    EmbeddingSet,
    GainReport,
    GateParams,
    NeighborCache,
    PredictionSet,
    validate_embedding_set,
)
from .vecstore import VectorIndex, build_index, build_neighbor_cache, knn
from .gate import confidence_curve, decide, nth_neighbor_distance
from .metrics import IntegrationConfig, confidence_gain, evaluate_curve, extrapolate_to_full_coverage
from .tuner import TuneResult, combine, plan_combination, tune_n
from .synth import SynthConfig, generate_synthetic, make_split

__all__ = [
    "ConfidenceCurve", "EmbeddingSet", "GainReport", "GateParams", "NeighborCache", "PredictionSet",
    "validate_embedding_set", "VectorIndex", "build_index", "build_neighbor_cache", "knn",
    "confidence_curve", "decide", "nth_neighbor_distance", "IntegrationConfig", "confidence_gain",
    "evaluate_curve", "extrapolate_to_full_coverage", "TuneResult", "combine", "plan_combination",
    "tune_n", "SynthConfig", "generate_synthetic", "make_split",
]
