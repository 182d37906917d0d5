"""Exception hierarchy for the package.

Every error raised on a documented failure path derives from EscapeError so
callers can catch the library's failures without swallowing programming bugs.
"""


class EscapeError(Exception):
    """Base class for all library errors."""


class DomainError(EscapeError, ValueError):
    """Input outside the documented domain of an operation."""


class ConvergenceError(EscapeError, RuntimeError):
    """An iterative solver exhausted its budget before meeting tolerance."""


class ReturnTimeOverflowError(EscapeError, RuntimeError):
    """Return time exceeds the configured cap (point too close to the fixed point)."""


class ReducibleMatrixError(EscapeError, ValueError):
    """Support graph of a transfer matrix is not strongly connected."""


class NormalizationError(EscapeError, RuntimeError):
    """A quantity that must be a probability failed its normalization check."""


class InsufficientSurvivorsError(EscapeError, ValueError):
    """Too few surviving samples in the requested estimation window."""


class InsufficientRangeError(EscapeError, ValueError):
    """Sweep table too short or too narrow for a scaling fit."""


class MonotonicityError(EscapeError, RuntimeError):
    """A sweep violated the expected monotone decrease of escape rates."""


class ConfigError(EscapeError, ValueError):
    """Invalid run configuration."""
