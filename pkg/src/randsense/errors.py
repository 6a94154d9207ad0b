"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class RandsenseError(Exception):
    """Base class for all library errors."""


class ValidationError(RandsenseError, ValueError):
    """Input violates a documented precondition."""


class InvalidDimensionError(ValidationError):
    """A size argument is zero, negative or inconsistent."""


class UnsupportedError(ValidationError):
    """Requested family member (constellation order, basis kind) is not supported."""


class NormalizationError(ValidationError):
    """An object must be normalized (unit power, unit energy) before use."""


class DomainError(ValidationError):
    """A numeric argument lies outside its mathematical domain."""


class BracketError(ValidationError):
    """Root-finding target lies outside the supplied bracket."""


class ContractError(RandsenseError):
    """A callable supplied by the caller violates its contract (e.g. monotonicity)."""


class InfeasibleError(RandsenseError):
    """Constraint set is empty.

    Attributes
    ----------
    certificate : dict
        Evidence of infeasibility, e.g. the minimal total constraint violation.
    """

    def __init__(self, message: str, certificate: dict | None = None):
        super().__init__(message)
        self.certificate = certificate or {}


class ConvergenceError(RandsenseError):
    """Iterative method stopped before meeting its tolerance.

    Attributes
    ----------
    residual : float
        Last residual reached.
    iterate : object
        Last iterate, if available.
    """

    def __init__(self, message: str, residual: float = float("nan"), iterate=None):
        super().__init__(message)
        self.residual = residual
        self.iterate = iterate


class ConfigError(ValidationError):
    """Experiment configuration is malformed; ``path`` locates the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
