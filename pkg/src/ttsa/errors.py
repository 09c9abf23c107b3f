"""Exception hierarchy shared by every ttsa module."""

from __future__ import annotations


class TtsaError(Exception):
    """Base class for all errors raised by ttsa."""


class DimensionMismatch(TtsaError, ValueError):
    pass


class ReducibleChain(TtsaError, ValueError):
    """The transition graph is not strongly connected."""


class InvalidKernel(TtsaError, ValueError):
    """Rows do not sum to one or entries fall outside [0, 1]."""


class SingularSystem(TtsaError, ArithmeticError):
    pass


class NonCenteredInput(TtsaError, ValueError):
    """A Poisson right-hand side with non-zero stationary mean."""


class SolverDiverged(TtsaError, ArithmeticError):
    pass


class NoConvergence(TtsaError, ArithmeticError):
    pass


class NotContracting(TtsaError, ArithmeticError):
    pass


class Unreachable(TtsaError, ValueError):
    pass


class InsufficientPoints(TtsaError, ValueError):
    pass


class NonPositiveValue(TtsaError, ValueError):
    pass


class PropertyViolated(TtsaError, AssertionError):
    """A sampled property check failed; ``witness`` holds the offending input."""

    def __init__(self, message: str, witness=None):
        super().__init__(message)
        self.witness = witness


class NonFiniteIterate(TtsaError, ArithmeticError):
    """An iterate left the finite range; carries the step index and seed."""

    def __init__(self, message: str, step: int, seed: int | None = None):
        super().__init__(message)
        self.step = step
        self.seed = seed


class ConfigError(TtsaError, ValueError):
    def __init__(self, message: str, field: str | None = None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field
