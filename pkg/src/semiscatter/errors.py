"""Exception types shared across the package."""


class SemiscatterError(Exception):
    """Base class for package errors."""


class DomainError(SemiscatterError, ValueError):
    """An argument lies outside the admissible range of an operation."""


class CapabilityError(SemiscatterError, NotImplementedError):
    """The request exceeds what the discretisation can represent."""


class NumericalError(SemiscatterError, ArithmeticError):
    """A dense linear-algebra step failed or produced non-finite output."""


class AliasingError(SemiscatterError, ValueError):
    """A grid does not resolve the field it is asked to hold."""


class AliasingWarning(UserWarning):
    """Transported support is close to (or past) the box edge."""


class StepStabilityError(SemiscatterError, ValueError):
    """A time step is too large for the configured stability check."""


class IntegratorError(SemiscatterError, RuntimeError):
    """A conserved quantity drifted beyond tolerance during a run."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class FitError(SemiscatterError, ValueError):
    """A power-law fit cannot be performed on the supplied series."""


class ConfigError(SemiscatterError, ValueError):
    """A configuration file or flag is malformed."""


class RegimeWarning(UserWarning):
    """Parameters fall outside the short-range regime the estimates target."""
