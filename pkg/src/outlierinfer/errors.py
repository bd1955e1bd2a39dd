"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when inputs violate a documented precondition (bad data,
    rank-deficient design, inconsistent configuration)."""


class NumericalError(RuntimeError):
    """Raised when a computation fails numerically: zero-mass truncation
    set, root-bracket failure, non-convergence, degenerate KKT system."""
