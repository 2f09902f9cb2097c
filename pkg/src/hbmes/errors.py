"""Exception hierarchy shared by every hbmes module."""


class HBMESError(Exception):
    """Base class for all package errors."""


class InputValidationError(HBMESError, ValueError):
    """An exogenous input or argument is outside its physical domain."""


class StateCorruptionError(HBMESError):
    """A plant state entered a step outside its storage bounds."""


class DispatchError(HBMESError):
    """The heat dispatch produced a flow that violates tank bounds."""


class ConfigurationError(HBMESError, ValueError):
    pass


class ShapeError(HBMESError, ValueError):
    pass


class UsageError(HBMESError):
    """An API was called out of order (e.g. backward before forward)."""


class TrainingDivergenceError(HBMESError, FloatingPointError):
    pass


class NotReadyError(HBMESError):
    """The replay buffer has not reached its warm-up size."""


class SearchSpaceError(HBMESError):
    """Exhaustive enumeration would exceed the configured ceiling."""


class TraceLoadError(HBMESError, ValueError):
    pass
