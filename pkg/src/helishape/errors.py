"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class HelishapeError(Exception):
    """Base class for every error raised by this package."""


class InvalidSpecError(HelishapeError, ValueError):
    """A domain description violates its invariants."""


class DomainError(HelishapeError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class PreconditionError(HelishapeError, ValueError):
    """An operation was called on inputs that break its stated precondition."""


class ResolutionError(HelishapeError):
    """The grid is too coarse for the requested estimate."""


class CapacityError(HelishapeError):
    """Components cannot be packed into the requested ball."""


class SolverError(HelishapeError):
    """An iterative linear solve did not converge."""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


class SpectralError(SolverError):
    """The eigensolver did not converge within its iteration cap."""


class DegenerateSpectrumError(SpectralError):
    """The largest positive eigenvalue is indistinguishable from zero."""


class MappingError(HelishapeError):
    """Inverting a flow map failed."""


class ConstructionError(HelishapeError):
    """A generating vector field could not be built with the requested quality."""


class AccuracyError(HelishapeError):
    """Time integration is not accurate enough at the requested step count."""


class EmptyClassError(HelishapeError):
    """The feasible class contains no usable candidate."""


class ConfigError(HelishapeError):
    """A configuration or spec document failed to parse."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + loc)
        self.line = line
        self.column = column
