"""Exception hierarchy shared by all modules."""


class DysonSimError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(DysonSimError, ValueError):
    pass


class RangeError(DysonSimError, ArithmeticError):
    pass


class ValidationError(DysonSimError, ValueError):
    pass


class StiffnessError(DysonSimError, ArithmeticError):
    pass


class QuadratureError(DysonSimError, ArithmeticError):
    pass


class BudgetError(DysonSimError, ValueError):
    pass


class ConsistencyError(DysonSimError, AssertionError):
    """An internal invariant (probability range, magnitude bound) was violated."""
