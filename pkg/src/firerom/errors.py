"""Exception types raised across the package."""


class FireRomError(Exception):
    """Base class for all package errors."""


class InvalidInputError(FireRomError, ValueError):
    pass


class DimensionError(FireRomError, ValueError):
    pass


class IntegrationError(FireRomError, RuntimeError):
    """Time integration failed; ``t`` holds the time reached."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class StepSizeUnderflowError(IntegrationError):
    pass


class StepBudgetError(IntegrationError):
    pass


class DivergenceError(IntegrationError):
    pass


class SelectionError(FireRomError, RuntimeError):
    """Interpolation point selection failed (rank-deficient basis)."""


class TrackingError(FireRomError, RuntimeError):
    pass


class OfflineError(FireRomError, RuntimeError):
    pass


class OnlineError(FireRomError, RuntimeError):
    """Reduced simulation hit a singular system; ``state`` is the offending state."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class FormatError(FireRomError, ValueError):
    pass


class UndefinedErrorMetric(FireRomError, ArithmeticError):
    """Relative error requested against a reference of zero norm."""
