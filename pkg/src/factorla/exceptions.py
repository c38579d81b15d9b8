"""Exception types shared across the package."""


class FactorlaError(Exception):
    """Base class for all library errors."""


class ShapeError(FactorlaError, ValueError):
    """Operands do not conform (wrong dimensions for the requested operation)."""


class DataError(FactorlaError, ValueError):
    """Bad input data: unparseable files, dangling keys, invalid parameters."""


class EmptyJoinError(DataError):
    """An M:N join produced no output rows (disjoint join domains)."""


class NumericError(FactorlaError, ArithmeticError):
    """Numerical failure (SVD non-convergence, division by a zero scalar)."""


class DivergenceError(NumericError):
    """Iterative training produced non-finite model state."""

    def __init__(self, iteration, message=None):
        self.iteration = iteration
        super().__init__(message or f"non-finite model state at iteration {iteration}")
