"""Exception hierarchy shared by every horizonlab module."""

from __future__ import annotations


class HorizonLabError(Exception):
    """Base class for all library errors."""


class NumericError(HorizonLabError, ArithmeticError):
    """A non-finite value reached a computation that requires finite input."""


class DivergenceError(NumericError):
    """An integration or rollout left the finite (or sane) range.

    Attributes:
        step: index of the step (or segment) at which divergence was detected.
    """

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class DegenerateDataError(HorizonLabError, ValueError):
    """Data lacks the variation needed by an operation (e.g. a constant column)."""

    def __init__(self, message: str, dim: int | None = None):
        super().__init__(message)
        self.dim = dim


class GradientSingularityError(NumericError):
    """The euclidean-norm loss was differentiated at a zero residual."""


class DegenerateMinimumError(NumericError):
    """A ratio denominator built from a gradient norm vanished."""


class StationarityError(HorizonLabError):
    """A supposed minimum has a gradient norm above the stationarity tolerance."""

    def __init__(self, message: str, T: int | None = None):
        super().__init__(message)
        self.T = T


class BasinMismatchError(HorizonLabError):
    """Re-training from the high-horizon minimum did not return to the low one."""


class IndeterminateRatioError(NumericError):
    """The generalization ratio has a vanishing denominator."""


class IngestionError(HorizonLabError, ValueError):
    """An input CSV failed validation.

    Attributes:
        row: 1-based data row (header excluded) of the first offending line.
    """

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message)
        self.row = row


class ConfigError(HorizonLabError, ValueError):
    """An experiment configuration is malformed."""
