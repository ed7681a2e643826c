"""Exception types raised by the pricing library."""


class RandAffineError(Exception):
    """Base class for library errors."""


class MomentOverflowError(RandAffineError, OverflowError):
    def __init__(self, n, family):
        super().__init__(f"raw moment of order n={n} overflows for {family}")
        self.n = n


class ConditioningError(RandAffineError, ArithmeticError):
    """Gram matrix is not numerically positive definite."""


class InvariantViolation(RandAffineError, ValueError):
    pass


class DomainError(RandAffineError, ValueError):
    """An argument lies outside the admissible region."""


class NoSolutionError(RandAffineError, ValueError):
    """Implied volatility inversion has no solution."""

    def __init__(self, msg, side):
        super().__init__(msg)
        self.side = side


class InstabilityError(RandAffineError, ArithmeticError):
    pass


class ResourceError(RandAffineError, MemoryError):
    pass
