"""Exception types shared across the package."""


class GradplayError(Exception):
    pass


class DimensionError(GradplayError, ValueError):
    """A strategy profile does not conform to the game's dimensions."""


class InvalidParameterError(GradplayError, ValueError):
    """A parameter violates an operation's precondition."""


class SolverFailure(GradplayError, RuntimeError):
    """An iterative solver did not converge.

    ``residual`` carries the last residual norm when one is available.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConditioningError(SolverFailure):
    """Finite-difference perturbations left the region where the map is defined."""


class NumericalFailure(GradplayError, ArithmeticError):
    """NaN or overflow appeared where a finite value was required."""
