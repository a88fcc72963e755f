"""Exception hierarchy shared by every survml module."""


class SurvmlError(Exception):
    """Base class for all errors raised by survml."""


class ConfigError(SurvmlError):
    """Invalid or inconsistent run configuration."""


class DataError(SurvmlError):
    """Input data violates a contract (schema, labels, missingness)."""


class PipelineOrderError(DataError):
    """A preprocessing step was applied out of the fixed pipeline order."""


class FitError(SurvmlError):
    """A model could not be fitted on the given data."""


class MonotoneLikelihoodError(FitError):
    """A Cox coefficient diverges: the partial likelihood has no finite maximizer."""

    def __init__(self, column, value):
        self.column = column
        self.value = value
        super().__init__(
            f"monotone likelihood: coefficient of {column!r} diverged to {value:.3g}"
        )


class ConvergenceError(FitError):
    """An iterative solver exhausted its iteration budget."""


class NoComparablePairsError(SurvmlError):
    """The concordance index is undefined because no pair is comparable."""
