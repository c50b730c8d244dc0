"""Exception types shared across the package."""


class FetaError(Exception):
    """Base class for all errors raised by :mod:`feta`."""


class DimensionError(FetaError, ValueError):
    """Operand shapes are incompatible."""


class DomainError(FetaError, ValueError):
    """An argument lies outside the domain an operation accepts."""


class ContractError(FetaError, RuntimeError):
    """A precondition on program state was violated."""


class ConfigError(FetaError, ValueError):
    """A configuration value or preset is invalid."""


class NumericalAbort(FetaError, RuntimeError):
    """Training produced a non-finite loss.

    ``snapshot`` carries the state at the moment of failure (epoch, step,
    loss, and the offending parameter names).
    """

    def __init__(self, message, snapshot=None):
        super().__init__(message)
        self.snapshot = snapshot or {}


class VerificationFailure(FetaError, AssertionError):
    """A numerical theorem check did not hold within tolerance."""
