"""Joint missing-view imputation and unsupervised feature selection for
incomplete multi-view data."""

from .data import (
    IndicatorPair,
    MaskSpec,
    MultiViewDataset,
    apply_mask,
    build_indicators,
    load_dataset,
    mean_initialize_missing,
)
from .errors import (
    ConfigError,
    DataError,
    MaskError,
    MonotonicityError,
    NumericalError,
    ParameterError,
    UnifierError,
)
from .evaluation import ClusteringOutcome, accuracy, evaluate_selection, kmeans, nmi
from .graph import GraphLaplacian, SimilarityGraph, initial_knn_graph, laplacian, update_similarity
from .solver import SelectionResult, SolverConfig, SolverState, rank_features, run
from .sylvester import SolveReport, SylvesterSystem, solve_cg, solve_dense

__version__ = "0.1.0"

__all__ = [
    "ClusteringOutcome",
    "ConfigError",
    "DataError",
    "GraphLaplacian",
    "IndicatorPair",
    "MaskError",
    "MaskSpec",
    "MonotonicityError",
    "MultiViewDataset",
    "NumericalError",
    "ParameterError",
    "SelectionResult",
    "SimilarityGraph",
    "SolveReport",
    "SolverConfig",
    "SolverState",
    "SylvesterSystem",
    "UnifierError",
    "accuracy",
    "apply_mask",
    "build_indicators",
    "evaluate_selection",
    "initial_knn_graph",
    "kmeans",
    "laplacian",
    "load_dataset",
    "mean_initialize_missing",
    "nmi",
    "rank_features",
    "run",
    "solve_cg",
    "solve_dense",
    "update_similarity",
]
