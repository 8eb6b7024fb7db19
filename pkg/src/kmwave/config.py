"""Run configuration: the YAML document given to every command with ``--config``."""

import logging

from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pydantic
import yaml

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic_yaml import to_yaml_str
from typing_extensions import Annotated

from kmwave_core.expressions import ParsingError, SemanticError
from kmwave_core.params import parse_range

from .dynamics import EvolveSettings, Scheme
from .exceptions import ParseError, ValidationError
from .functions import PhaseSpaceFunction
from .manifold import MarkerChart, circle_chart, init_from_phase_function
from .symbol import BUILTINS, DispersionSymbol, make_symbol
from .verification import PROPERTIES, VerifyContext

logger = logging.getLogger(__name__)


def _check_range(text: str) -> str:
    try:
        start, stop, num = parse_range(text)
    except ValueError as error:
        raise ValueError(f"'{text}' is not a START:STOP:NUM range.") from error
    if num < 2 or not stop > start:
        raise ValueError(f"'{text}' needs STOP > START and NUM >= 2.")
    return text


def range_nodes(nodes: Union[str, Sequence[float]]) -> np.ndarray:
    """Nodes of a ``START:STOP:NUM`` range or an explicit list."""
    if isinstance(nodes, str):
        start, stop, num = parse_range(nodes)
        return np.linspace(start, stop, num)
    return np.asarray(nodes, dtype=float)


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SymbolBlock(_Block):
    kind: Literal["schrodinger", "harmonic", "helmholtz", "user"]
    params: Dict[str, Union[float, str]] = Field(default_factory=dict)
    branch_hint: Optional[float] = None
    dim: int = Field(default=1, ge=1)


class PhaseFunctionInitial(_Block):
    kind: Literal["phase_function"]
    S: str
    amp: str = "1"
    grid: Union[str, List[str]]
    base_index: int = Field(default=0, ge=0)

    @field_validator("grid")
    @classmethod
    def _grid(cls, value):
        if isinstance(value, str):
            return _check_range(value)
        return [_check_range(v) for v in value]


class CircleInitial(_Block):
    kind: Literal["circle"]
    radius: float = Field(gt=0)
    n: int = Field(ge=3)
    base_index: int = Field(default=0, ge=0)


Initial = Annotated[Union[PhaseFunctionInitial, CircleInitial], Field(discriminator="kind")]


class EvolveBlock(_Block):
    scheme: Scheme = Scheme.RK4
    h: float = Field(default=1e-3, gt=0)
    t0: float = 0.0
    t1: float = 1.0
    refine_every: int = Field(default=0, ge=0)
    max_spacing: float = Field(default=0.1, gt=0)
    caustic_threshold: float = Field(default=0.1, gt=0)
    max_markers: int = Field(default=100_000, ge=2)

    @model_validator(mode="after")
    def _interval(self):
        if not self.t1 > self.t0:
            raise ValueError(f"t1 ({self.t1}) must be greater than t0 ({self.t0}).")
        if self.h > self.t1 - self.t0:
            raise ValueError(f"h ({self.h}) is longer than the interval.")
        return self


class OutputsBlock(_Block):
    dir: str = "kmwave-out"
    save_every: int = Field(default=1, ge=1)
    q_grid: Optional[Union[str, List[float]]] = None

    @field_validator("q_grid")
    @classmethod
    def _q_grid(cls, value):
        if isinstance(value, str):
            return _check_range(value)
        return value


class QuantizeBlock(_Block):
    radius_range: Tuple[float, float]
    n_levels: int = Field(default=5, ge=1)
    n_markers: int = Field(default=4096, ge=16)

    @field_validator("radius_range")
    @classmethod
    def _radius_range(cls, value):
        if not 0 < value[0] < value[1]:
            raise ValueError("radius_range needs 0 < low < high.")
        return value


class VerifyBlock(_Block):
    properties: List[str] = Field(default_factory=lambda: ["all"])
    seeds: List[int] = Field(default_factory=lambda: [0])
    frozen_in_span: Optional[float] = Field(default=None, gt=0)

    @field_validator("properties")
    @classmethod
    def _properties(cls, value):
        unknown = sorted(set(value) - set(PROPERTIES) - {"all"})
        if unknown:
            raise ValueError(f"Unknown properties {unknown}. Choose among {sorted(PROPERTIES)} or 'all'.")
        return value


class RunConfig(_Block):
    symbol: SymbolBlock
    epsilon: float = Field(gt=0)
    initial: Initial
    evolve: EvolveBlock = Field(default_factory=EvolveBlock)
    outputs: OutputsBlock = Field(default_factory=OutputsBlock)
    quantize: Optional[QuantizeBlock] = None
    verify: Optional[VerifyBlock] = None

    def require(self, block: str) -> Any:
        """
        Return a command block.

        Raises:
            ValidationError: If the block is missing.
        """
        value = getattr(self, block)
        if value is None:
            raise ValidationError(f"The run configuration has no '{block}' block.", field=block)
        return value


def _dotted(loc: Sequence[Any], data: Any) -> str:
    """Error location as a dotted path of the document, without pydantic union tags."""
    parts = []
    node = data
    for item in loc:
        if isinstance(node, dict):
            if item in node:
                node = node[item]
            elif item == node.get("kind"):
                continue
            else:
                node = None
            parts.append(str(item))
        elif isinstance(node, list) and isinstance(item, int) and 0 <= item < len(node):
            parts.append(str(item))
            node = node[item]
        else:
            break
    return ".".join(parts)


def _key_line(text: str, path: Sequence[str]) -> Optional[int]:
    """One-based line of a mapping key, located on the composed YAML node graph."""
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return None
    line = None
    for name in path:
        if not isinstance(node, yaml.MappingNode):
            return line
        for key, value in node.value:
            if key.value == name:
                line = key.start_mark.line + 1
                node = value
                break
    return line


def _drop(data: Dict[str, Any], path: Sequence[str]) -> bool:
    node: Any = data
    for name in path[:-1]:
        if isinstance(node, dict) and name in node:
            node = node[name]
    if isinstance(node, dict) and path[-1] in node:
        del node[path[-1]]
        return True
    return False


def parse_config(text: str, strict: bool = True) -> RunConfig:
    """
    Parse and validate a run configuration document.

    Args:
        text: YAML document.
        strict: Reject unknown keys. Otherwise they are dropped with a warning.

    Raises:
        ParseError: Invalid YAML, or an unknown key in strict mode.
        ValidationError: A missing or invalid value, with its dotted field path.
    """
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as error:
        mark = getattr(error, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ParseError(f"The run configuration is not valid YAML: {error}", line=line) from error
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ParseError("The run configuration must be a mapping.", line=1)

    while True:
        try:
            return RunConfig.model_validate(data)
        except pydantic.ValidationError as error:
            errors = error.errors()
            extras = [e for e in errors if e["type"] == "extra_forbidden"]
            if not extras:
                first = errors[0]
                field = _dotted(first["loc"], data)
                raise ValidationError(f"Invalid value for '{field}': {first['msg']}", field=field) from error
            path = _dotted(extras[0]["loc"], data).split(".")
            key = ".".join(path)
            if strict or not _drop(data, path):
                raise ParseError(
                    f"Unknown key '{key}' in the run configuration.", line=_key_line(text, path), key=key
                ) from error
            logger.warning(f"Ignoring unknown key '{key}' in the run configuration.")


def load_config(path: str, strict: bool = True) -> RunConfig:
    with open(path, "r") as f:
        return parse_config(f.read(), strict=strict)


def dump_config(config: RunConfig) -> str:
    """Normalized YAML with every default filled in."""
    return to_yaml_str(config)


def build_symbol(config: RunConfig) -> DispersionSymbol:
    block = config.symbol
    assert block.kind in BUILTINS
    return make_symbol(block.kind, block.params, block.branch_hint, block.dim)


def build_chart(config: RunConfig) -> MarkerChart:
    """
    Initial chart of the run.

    Raises:
        ValidationError: If an expression of the initial block does not parse.
    """
    initial = config.initial
    if isinstance(initial, CircleInitial):
        return circle_chart(initial.radius, initial.n, config.epsilon, initial.base_index)
    if isinstance(initial.grid, str):
        grid: Union[np.ndarray, List[np.ndarray]] = range_nodes(initial.grid)
    else:
        grid = [range_nodes(axis) for axis in initial.grid]
    try:
        chart = init_from_phase_function(initial.S, initial.amp, grid, config.epsilon)
    except (ParsingError, SemanticError) as error:
        raise ValidationError(f"Invalid initial expression: {error}", field="initial") from error
    if initial.base_index >= chart.n_markers:
        raise ValidationError(
            f"base_index {initial.base_index} is out of range for {chart.n_markers} markers.",
            field="initial.base_index",
        )
    return chart.replace(base_index=initial.base_index)


def build_settings(config: RunConfig) -> EvolveSettings:
    block = config.evolve
    return EvolveSettings(
        scheme=block.scheme,
        h=block.h,
        t0=block.t0,
        t1=block.t1,
        refine_every=block.refine_every,
        max_spacing=block.max_spacing,
        caustic_threshold=block.caustic_threshold,
        max_markers=block.max_markers,
        save_every=config.outputs.save_every,
    )


def profile_grid(config: RunConfig, override: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Query points of the reconstruction.

    Raises:
        ValidationError: If neither the override nor ``outputs.q_grid`` is set.
    """
    if override is not None:
        return np.asarray(override, dtype=float)
    if config.outputs.q_grid is None:
        raise ValidationError("Reconstruction needs 'outputs.q_grid' or --q-grid.", field="outputs.q_grid")
    return range_nodes(config.outputs.q_grid)


def constraint_function(config: RunConfig) -> Optional[PhaseSpaceFunction]:
    """A function vanishing on the initial manifold, known for circle initial data only."""
    initial = config.initial
    if isinstance(initial, CircleInitial):
        return PhaseSpaceFunction.from_expression(f"q^2 + p^2 - {initial.radius!r}^2")
    return None


def build_context(config: RunConfig, threads: int = 1) -> VerifyContext:
    return VerifyContext(
        symbol=build_symbol(config),
        chart=build_chart(config),
        settings=build_settings(config),
        constraint=constraint_function(config),
        threads=threads,
        frozen_in_span=config.verify.frozen_in_span if config.verify else None,
    )
