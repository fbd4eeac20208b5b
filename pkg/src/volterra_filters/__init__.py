"""Volterra (polynomial) estimators and detectors with guaranteed error figures.

The package is organised by task:

``features``     polynomial feature sets y^(P) over a measurement record
``moments``      moment sets from analytic models, kernels or sample data
``estimation``   optimal Volterra filters and their error covariances
``detection``    R-optimal detection rules and Cantelli-type error bounds
``readout``      qubit-readout model, Fredholm filter, LRT and Monte Carlo
``tomography``   linear state tomography in an orthonormal Hermitian basis
``cli``          command-line front end (``volterra-filters``)
"""

from .errors import (
    IllConditionedMoments,
    IndistinguishableHypotheses,
    InsufficientData,
    InvalidArgument,
    InvalidGrid,
    InvalidModel,
    InvalidRule,
    UnboundedBound,
    VolterraError,
)
from .features import FeatureSet, enumerate_features, evaluate_features
from .moments import (
    MomentSet,
    SampleDataset,
    WhiteNoise,
    gaussian_linear_moments,
    kernel_moments,
    sample_moments,
)
from .estimation import (
    ErrorCovariance,
    VolterraFilter,
    check_matrix_uncertainty,
    continuous_linear_filter,
    error_at_filter,
    evaluate_filter,
    information_form_error,
    optimal_error,
    solve_optimal_filter,
)
from .detection import (
    DetectionRule,
    HypothesisMoments,
    cantelli_bound,
    decide,
    error_bounds,
    hypothesis_stats,
    r_optimal_rule,
)

__version__ = "0.1.0"

__all__ = [
    "VolterraError",
    "InvalidArgument",
    "InvalidModel",
    "InvalidGrid",
    "InvalidRule",
    "InsufficientData",
    "IllConditionedMoments",
    "IndistinguishableHypotheses",
    "UnboundedBound",
    "FeatureSet",
    "enumerate_features",
    "evaluate_features",
    "MomentSet",
    "SampleDataset",
    "WhiteNoise",
    "sample_moments",
    "gaussian_linear_moments",
    "kernel_moments",
    "VolterraFilter",
    "ErrorCovariance",
    "solve_optimal_filter",
    "evaluate_filter",
    "error_at_filter",
    "optimal_error",
    "continuous_linear_filter",
    "information_form_error",
    "check_matrix_uncertainty",
    "HypothesisMoments",
    "DetectionRule",
    "hypothesis_stats",
    "r_optimal_rule",
    "error_bounds",
    "cantelli_bound",
    "decide",
]
