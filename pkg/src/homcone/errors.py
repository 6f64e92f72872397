"""Exception hierarchy shared by the solver modules."""


class HomconeError(Exception):
    """Base class for all package errors."""


class ConstraintViolation(HomconeError, ValueError):
    """A control value lies outside the constraint cone."""


class DomainError(HomconeError, ValueError):
    """An argument lies outside the domain of the model (e.g. t outside [0, T])."""


class IllPosedError(HomconeError):
    """The driver infimum is -inf at some (t, P, Lambda); the BSDE has no finite driver."""

    def __init__(self, message, t=None, P=None):
        super().__init__(message)
        self.t = t
        self.P = P


class SchemeDivergence(HomconeError):
    """A numerical scheme failed (non-contracting fixed point, NaN/Inf values)."""


class NonFiniteObjective(HomconeError, ValueError):
    """An objective handed to the cone minimiser is not finite at the origin."""


class GridMismatch(HomconeError, ValueError):
    """Two objects that must share a time grid do not."""


class ConfigError(HomconeError, ValueError):
    """A model or experiment configuration file could not be parsed or validated."""
