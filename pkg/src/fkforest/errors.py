"""Structured errors shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for every structured failure raised by this package."""


class ValidationError(ToolkitError):
    """An input object violates a documented invariant (bad model, bad map)."""


class InvalidParameter(ToolkitError):
    """A parameter combination is outside the documented scope of an operation."""


class IdentityMismatch(ToolkitError):
    """Two routes that must agree exactly produced different values.

    Raised instead of silently preferring one side; carries both objects so
    the caller can inspect the disagreement.
    """

    def __init__(self, message: str, *, lhs=None, rhs=None):
        super().__init__(message)
        self.lhs = lhs
        self.rhs = rhs


class CapExceeded(ToolkitError):
    """Raised instead of attempting work larger than a configured cap.

    Carries the predicted size so callers can decide whether to retry
    with a larger cap.
    """

    def __init__(self, message: str, *, predicted=None, cap=None):
        super().__init__(message)
        self.predicted = predicted
        self.cap = cap
