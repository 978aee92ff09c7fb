"""Nonparametric regression with functional responses over semi-metric spaces."""
from .curves import Curve, Grid, SemiMetric, hilbert_norm, inner_product, semi_metric
from .datagen import ProcessSpec, estimate_gamma, generate, generate_coupled, noise_sequence
from .estimator import (
    FunctionalKNeighborsRegressor,
    FunctionalNadarayaWatson,
    WeightScheme,
    WeightVector,
    compute_weights,
    estimate,
    knn_radius,
    rank_neighbors,
    weight_stats,
)
from .exceptions import (
    ConfigError,
    DataError,
    EmptyNeighborhoodError,
    FunregError,
    GridMismatchError,
    NumericError,
)
from .orlicz import PsiSpec, orlicz_norm, psi_eval, tail_bound

__version__ = "0.1.0"
