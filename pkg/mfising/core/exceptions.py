"""
Error taxonomy.

Every error raised on purpose by the library derives from MfIsingError and from
the closest builtin, so callers can catch either.
"""
from typing import Optional


class MfIsingError(Exception):
    """Root of all library errors."""


class InfeasibleParametersError(MfIsingError, ValueError):
    """A builder or solver was asked for an impossible parameter combination."""

    def __init__(self, constraint: str, detail: Optional[str] = None):
        self.constraint = constraint
        message = f"infeasible parameters: {constraint}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)


class RetryExhaustedError(MfIsingError, RuntimeError):
    def __init__(self, what: str, attempts: int):
        self.attempts = attempts
        super().__init__(f"{what} failed after {attempts} attempts")


class EigenConvergenceError(MfIsingError, RuntimeError):
    def __init__(self, residual: float, detail: str = "eigen-iteration did not converge"):
        self.residual = residual
        super().__init__(f"{detail}; achieved residual {residual:.3e}")


class SizeLimitError(MfIsingError, ValueError):
    def __init__(self, what: str, requested: int, cap: int, setting: str):
        self.requested = requested
        self.cap = cap
        super().__init__(f"{what} of size {requested} exceeds the cap {cap} ({setting})")


class MeanFieldInconsistencyError(MfIsingError, ArithmeticError):
    def __init__(self, gap: float):
        self.gap = gap
        super().__init__(
            f"log Z is below the mean-field lower bound by {-gap:.3e}; "
            "one of the inputs is wrong"
        )


class GridCoverageError(MfIsingError, RuntimeError):
    def __init__(self, missing_mass: float):
        self.missing_mass = missing_mass
        super().__init__(f"auxiliary grid misses probability mass {missing_mass:.3e}")


class RegimeMismatchError(MfIsingError, ValueError):
    pass


class MatrixFormatError(MfIsingError, ValueError):
    pass


class EmptySampleError(MfIsingError, ValueError):
    pass
