"""Exception types shared across the package.

Each carries enough context for the CLI to print an actionable message and
pick an exit code.
"""


class LPKernelError(Exception):
    """Base class for all package errors."""


class NotKatoClassError(LPKernelError, ValueError):
    """The Kato integral diverged or exceeded the overflow guard."""


class TruncationError(LPKernelError, RuntimeError):
    def __init__(self, message, best_tail):
        super().__init__(message)
        self.best_tail = best_tail


class InvariantViolation(LPKernelError, AssertionError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class DerivativeOrderError(LPKernelError, ValueError):
    pass


class DiagonalSingularityError(LPKernelError, ValueError):
    pass


class GridRefinementError(LPKernelError, RuntimeError):
    def __init__(self, message, achieved=None, bound=None):
        super().__init__(message)
        self.achieved = achieved
        self.bound = bound


class NearResonanceError(LPKernelError, RuntimeError):
    """(I + V R_0^+(lambda^2)) is numerically singular on the grid."""

    def __init__(self, message, lam=None, condition=None):
        super().__init__(message)
        self.lam = lam
        self.condition = condition


class ThresholdNotFound(LPKernelError, RuntimeError):
    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved or []


class RegimeError(LPKernelError, ValueError):
    pass


class BudgetExceeded(LPKernelError, RuntimeError):
    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class OracleTruncationError(LPKernelError, RuntimeError):
    pass


class ConfigError(LPKernelError, ValueError):
    def __init__(self, message, field_path=""):
        prefix = field_path and field_path not in message
        super().__init__(f"{field_path}: {message}" if prefix else message)
        self.field_path = field_path
