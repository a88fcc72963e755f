"""Survival-analysis model comparison: Cox, elastic-net Cox and random survival forests.

Includes KNN imputation, Harrell's C-index, nested cross-validation and
Monte Carlo validation.
"""

__version__ = "0.1.0"

from .dataset import SchemaConfig, SurvivalDataset, load_csv, preprocess  # noqa: E402
from .errors import (  # noqa: E402
    ConfigError,
    ConvergenceError,
    DataError,
    FitError,
    MonotoneLikelihoodError,
    NoComparablePairsError,
    PipelineOrderError,
    SurvmlError,
)

__all__ = [
    "ConfigError",
    "ConvergenceError",
    "DataError",
    "FitError",
    "MonotoneLikelihoodError",
    "NoComparablePairsError",
    "PipelineOrderError",
    "SchemaConfig",
    "SurvivalDataset",
    "SurvmlError",
    "__version__",
    "load_csv",
    "preprocess",
]
