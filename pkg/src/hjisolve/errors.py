"""Exception types shared across the solver."""

from __future__ import annotations


class HJIError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(HJIError):
    """A grid, simulation, or run configuration is malformed.

    The message names the offending field (dotted path for nested
    configuration documents).
    """

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"config error at {field}: {message}")


class ModelEvaluationError(HJIError):
    """A model callable returned a non-finite value or raised."""


class NondegeneracyError(HJIError):
    """The diffusion matrix is (numerically) singular where it must not be."""


class InvalidGameError(HJIError):
    """A payoff matrix contains non-finite entries or has a bad shape."""


class StructureError(HJIError):
    """An operator lacks the structure a Perron eigensolve requires."""


class ConvergenceError(HJIError):
    """An iterative solve exhausted its iteration budget.

    Carries the last bracket so callers can report how close it got.
    """

    def __init__(self, message: str, value=None, lower=None, upper=None,
                 residual=None, iterations=None):
        self.value = value
        self.lower = lower
        self.upper = upper
        self.residual = residual
        self.iterations = iterations
        super().__init__(message)


class EstimationError(HJIError):
    """A Monte Carlo estimate was refused (too many diverged paths, etc.)."""


class BudgetExceededError(HJIError):
    """A brute-force enumeration would exceed its combinatorial budget."""
