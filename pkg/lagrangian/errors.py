"""
Exception hierarchy shared by every lml module.

Each class also derives from the closest builtin so callers can catch either.
"""

from typing import Any, List, Optional, Sequence


class LmlError(Exception):
    """Base class for all toolkit errors."""


class InputError(LmlError, ValueError):
    """Non-finite or malformed numerical input."""


class DomainError(LmlError, ValueError):
    """Argument outside the domain of an implicit function."""


class ConfigurationError(LmlError, ValueError):
    """Parameters that violate the supercritical band or grid requirements."""


class PreconditionError(LmlError, ValueError):
    """An operation was called on an object that does not meet its requirements."""


class KindError(LmlError, TypeError):
    """A sub-kind object was passed where a super-kind one is required, or vice versa."""


class InternalError(LmlError, RuntimeError):
    """A self-consistency check failed."""


class FitError(LmlError, RuntimeError):
    """A regression could not be carried out on the requested window."""


class IntegrationError(LmlError, RuntimeError):
    """The ODE integrator stopped early."""

    def __init__(self, message: str, last_t: Optional[float] = None, last_state: Any = None):
        super().__init__(message)
        self.last_t = last_t
        self.last_state = last_state


class ConvergenceError(LmlError, RuntimeError):
    """Newton iteration failed to reach its tolerance."""

    def __init__(self, message: str, residual_history: Sequence[float] = ()):
        super().__init__(message)
        self.residual_history: List[float] = list(residual_history)


class SchemaError(LmlError, ValueError):
    """Configuration file rejected by the published schema."""

    def __init__(self, message: str, diagnostics: Sequence[str] = ()):
        super().__init__(message)
        self.diagnostics: List[str] = list(diagnostics)


def exit_code_for(error: BaseException) -> int:
    """Process exit code for an error raised during a run."""
    if isinstance(error, (SchemaError, ConfigurationError)):
        return 2
    return 1
