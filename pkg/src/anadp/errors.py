"""Exception types shared across the package."""


class ANADPError(Exception):
    """Base class for all package errors."""


class ConfigurationError(ANADPError, ValueError):
    """Invalid shapes, lengths, or hyperparameters."""


class NumericError(ANADPError, ArithmeticError):
    """A non-finite value appeared where a finite one is required.

    ``index`` identifies the offending example, element, or training step.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class InfeasibleTargetError(ANADPError):
    """No noise multiplier in the search bracket reaches the requested budget."""
