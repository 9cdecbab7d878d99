"""Exception types shared across the package."""


class HeatLayerError(Exception):
    """Base class for all package errors."""


class ConfigurationError(HeatLayerError, ValueError):
    """Invalid parameters, unsupported combinations or mismatched grids."""


class DomainError(HeatLayerError, ValueError):
    """A point lies outside the set where an operation is defined."""


class AccuracyError(HeatLayerError):
    """A quadrature could not reach the requested accuracy."""


class StepSizeError(HeatLayerError):
    """The diagonal time block is singular; the time step must be reduced."""


class ExtrapolationError(HeatLayerError):
    """A limit extrapolation sequence was not monotone."""


class ConvergenceError(HeatLayerError):
    """An iteration failed to converge; ``report`` holds its history."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class AccuracyWarning(UserWarning):
    """Emitted when adaptive refinement hits its level cap."""
