"""Exception hierarchy shared by every gapfill module."""


class GapfillError(Exception):
    """Base class for all errors raised by gapfill."""

    exit_code = 1


class ConfigError(GapfillError, ValueError):
    """Invalid configuration: overlapping ranges, bad parameters, malformed specs."""

    exit_code = 2


class DataError(GapfillError, ValueError):
    """Input data cannot be used: empty series, misaligned grids, missing context."""

    exit_code = 3


class ContextError(DataError):
    """A gap lacks the gap-free context the chosen model needs."""


class DegenerateScalerError(DataError):
    """Scaler fitted on data with fewer than two distinct values."""


class NumericError(GapfillError, ArithmeticError):
    """Non-finite values appeared during training or inference."""

    exit_code = 4


class DimensionError(GapfillError, ValueError):
    """Array shapes do not fit the layer or network they are passed to."""

    exit_code = 3


class UsageError(GapfillError, RuntimeError):
    """API called out of order, e.g. backward before a training forward pass."""


class MetricDomainError(GapfillError, ValueError):
    """A metric is undefined on the given inputs (zero truth, zero variance)."""

    exit_code = 3


class ModelFileError(DataError):
    """Model container is corrupt, truncated or of an unknown version."""
