"""Exception hierarchy shared by the library and the CLI exit-code mapping."""

from typing import Any, Dict, Optional


class CarlemanLBMError(Exception):
    """Base class for every error raised on purpose by carleman_lbm."""

    exit_code = 1


class InvalidParameterError(CarlemanLBMError, ValueError):
    """A documented precondition does not hold."""

    exit_code = 2


class InsufficientDataError(InvalidParameterError):
    """A fit or threshold scan was given too few usable points."""


class OutOfScopeError(InvalidParameterError):
    """The requested case has no model (e.g. D=3 collision-circuit costs)."""


class ConfigError(CarlemanLBMError):
    """An experiment configuration could not be read or validated."""

    exit_code = 2


class CapacityError(CarlemanLBMError):
    """A dense or Carleman object would exceed the configured memory cap."""

    exit_code = 3

    def __init__(
        self,
        message: str,
        required_bytes: int,
        limit_bytes: int,
        context: Optional[Dict[str, Any]] = None,
    ):
        self.required_bytes = int(required_bytes)
        self.limit_bytes = int(limit_bytes)
        self.context = dict(context or {})
        details = ", ".join(f"{k}={v}" for k, v in self.context.items())
        suffix = f" [{details}]" if details else ""
        super().__init__(
            f"{message}: needs {self.required_bytes} bytes, cap is {self.limit_bytes} bytes{suffix}"
        )


class NumericalError(CarlemanLBMError):
    """Non-finite values appeared while time stepping."""

    exit_code = 4

    def __init__(self, message: str, step: Optional[int] = None):
        self.step = step
        super().__init__(message if step is None else f"{message} (step t*={step})")


def check_capacity(
    required_bytes: int, limit_bytes: Optional[int], what: str, **context: Any
) -> None:
    """Raise CapacityError when ``required_bytes`` exceeds ``limit_bytes`` (None disables the check)."""
    if limit_bytes is not None and required_bytes > limit_bytes:
        raise CapacityError(what, required_bytes, limit_bytes, context)
