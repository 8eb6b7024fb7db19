import json

import rich_click as click

from typing import Any, Dict, Optional
from rich.panel import Panel
from rich import print


class KMWaveError(Exception):
    """Base class of the errors raised by the kmwave library.

    Attributes:
        message: Human readable description.
        details: Machine readable context (marker index, residual, offending key...).
        exit_code: Exit code used when the error reaches the command line.
    """

    exit_code = 4

    def __init__(self, message: str, **details: Any) -> None:
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> Dict[str, Any]:
        return {
            "error": type(self).__name__,
            "message": self.message,
            "details": {key: _jsonable(value) for key, value in self.details.items()},
        }


def _jsonable(value: Any) -> Any:
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if hasattr(value, "tolist"):
        return value.tolist()
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return str(value)


class KMWaveCLIError(click.ClickException):
    """Base exception for kmwave CLI errors."""

    def __init__(self, message: str) -> None:
        super().__init__(message)

    def show(self, file=None):
        """Override to display errors in a cleaner format."""
        print(Panel(self.format_message(), title="Error", style="red"))


class InternalCliError(KMWaveCLIError):
    """Error raised when an unknown internal error occured."""

    exit_code = 3


class SimulationError(KMWaveCLIError):
    """A library error surfaced by a command, printed as JSON on stderr."""

    def __init__(self, error: KMWaveError, exit_code: Optional[int] = None) -> None:
        super().__init__(error.message)
        self.error = error
        self.exit_code = exit_code if exit_code is not None else error.exit_code

    def show(self, file=None):
        click.echo(json.dumps(self.error.to_dict(), sort_keys=True), err=True)


class VerificationFailed(KMWaveCLIError):
    """At least one verified property is outside its tolerance."""

    exit_code = 1

    def __init__(self, failed: int, total: int) -> None:
        super().__init__(f"{failed} of {total} properties failed.")
