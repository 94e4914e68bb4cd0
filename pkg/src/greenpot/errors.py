"""Exception hierarchy shared by all greenpot modules."""

from __future__ import annotations


class GreenPotError(Exception):
    """Base class for all errors raised by greenpot."""


class DomainError(GreenPotError, ValueError):
    """A point, set or domain violates a geometric precondition."""


class ResolutionError(DomainError):
    """Grid spacing is too coarse for the requested geometry."""


class SolverError(GreenPotError, RuntimeError):
    """A linear or quadratic solve failed."""


class ConvergenceError(SolverError):
    """The simplex solver hit its iteration cap.

    Carries the best iterate seen so far and its KKT gap so callers can
    inspect or accept it.
    """

    def __init__(self, message, weights=None, gap=float("nan"), iterations=0):
        super().__init__(message)
        self.weights = weights
        self.gap = gap
        self.iterations = iterations


class LevelSetError(GreenPotError, ValueError):
    """Level-domain extraction or containment failed."""


class ConfigError(GreenPotError, ValueError):
    """Invalid scenario configuration; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
