"""Errors raised by the kmwave library.

Every error carries machine readable ``details`` that the CLI prints as JSON.
"""

from typing import Optional

from kmwave_core.exceptions import KMWaveError


class SymbolError(KMWaveError):
    """Unknown builtin symbol, missing user partial or failed derivative self-check."""


class NoConvergence(KMWaveError):
    """An iterative solver (frequency Newton, implicit midpoint, variational Newton) gave up."""

    def __init__(
        self,
        message: str,
        index: Optional[int] = None,
        residual: Optional[float] = None,
        **details,
    ) -> None:
        super().__init__(message, index=index, residual=residual, **details)
        self.index = index
        self.residual = residual


class DegenerateSymbol(KMWaveError):
    """|dD/dU| fell below the degeneracy threshold at a marker."""

    def __init__(self, message: str, index: Optional[int] = None, **details) -> None:
        super().__init__(message, index=index, **details)
        self.index = index


class ChartError(KMWaveError):
    """Malformed chart or an operation the chart's shape does not support."""


class OpenTopology(KMWaveError):
    """A loop quantity was requested on a line chart."""


class OrientationError(KMWaveError):
    """A gauge map is not an orientation preserving bijection of the labels."""


class RefinementExplosion(KMWaveError):
    """The marker count went over the configured cap."""


class CausticAtQuery(KMWaveError):
    """A branch at the query point has a projection Jacobian below the caustic threshold."""


class UnresolvedCaustic(KMWaveError):
    """The momentum chart is degenerate or inconsistent near a caustic."""


class ZeroWeight(KMWaveError):
    """rho vanishes at a marker."""


class ConfigError(KMWaveError):
    exit_code = 2


class ParseError(ConfigError):
    """The run configuration is not valid YAML, or holds a key that does not exist."""

    def __init__(
        self, message: str, line: Optional[int] = None, key: Optional[str] = None, **details
    ) -> None:
        super().__init__(message, line=line, key=key, **details)
        self.line = line
        self.key = key


class ValidationError(ConfigError):
    """A value of the run configuration is invalid."""

    def __init__(self, message: str, field: str, **details) -> None:
        super().__init__(message, field=field, **details)
        self.field = field
