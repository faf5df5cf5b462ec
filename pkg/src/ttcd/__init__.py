"""Temporal causal discovery for non-stationary multivariate time series."""

from .data import (AcyclicityError, DataError, TemporalAdjacency, TemporalGraph, TimeSeriesDataset, load_csv,
                   make_windows)
from .metrics import ScoreCard, score
from .synthetic import GenSpec, generate, truth_graph
from .trainer import VARIANTS, HyperParams, run_ablation, train

__all__ = [
    "AcyclicityError", "DataError", "GenSpec", "HyperParams", "ScoreCard", "TemporalAdjacency", "TemporalGraph",
    "TimeSeriesDataset", "VARIANTS", "generate", "load_csv", "make_windows", "run_ablation", "score", "train",
    "truth_graph",
]
__version__ = "0.1.0"
