"""Exception types raised across the package."""


class IclsError(Exception):
    """Base class for all package errors."""


class ZeroColumn(IclsError):
    def __init__(self, column: int):
        super().__init__(f"column {column} of A is entirely zero")
        self.column = column


class ApplyBreakdown(IclsError):
    """A triangular solve in reduced precision produced an infinity."""

    def __init__(self, position: int):
        super().__init__(f"overflow in triangular solve at position {position}")
        self.position = position


class NotSymmetric(IclsError):
    pass


class ShiftBudgetExceeded(IclsError):
    def __init__(self, alpha: float, cap: float):
        super().__init__(f"global shift {alpha:.3e} exceeds cap {cap:.3e}")
        self.alpha = alpha
        self.cap = cap


class BasisMemoryExceeded(IclsError):
    """Stored reorthogonalization bases would exceed the configured cap."""


class ParseError(IclsError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DimensionError(IclsError):
    pass
