"""Marker charts of a Lagrangian embedding with its density, phase section and Maslov data.

A curve chart (configuration dimension 1) orders its markers along a label ``x``. It is either
a ``line`` (open curve) or a ``circle`` (closed curve, labels periodic with ``period``). A grid
chart (dimension n > 1) stores markers on a label grid of shape ``grid_shape`` flattened in C
order; its labels are the flat indices and its weights already include the cell volumes.

Weights are density components in the label coordinate. Every sum over markers uses the
trapezoid weights returned by :func:`quadrature_weights`.
"""

import dataclasses
import logging
import math

from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import sympy

from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from kmwave_core.expressions import ExpressionParser

from .exceptions import ChartError, OpenTopology, OrientationError
from .functions import compile_scalar, phase_space_symbols

logger = logging.getLogger(__name__)

LAGRANGIAN_TOL = 1e-8
ANGLE_SNAP = 1e-9
MAX_REFINE_PASSES = 32


class Topology(str, Enum):
    CIRCLE = "circle"
    LINE = "line"


@dataclass(frozen=True, eq=False)
class MarkerChart:
    """A discretized Lagrangian embedding.

    Attributes:
        labels: Strictly increasing marker labels, shape ``(N,)``.
        q, p: Marker positions in phase space, shape ``(N, n)``.
        weights: Density components in the label coordinate, shape ``(N,)``.
        phases: Unreduced values of the parallel section at the markers.
        maslov: Integer Maslov counters.
        base_index: Index of the distinguished marker.
        topology: ``circle`` or ``line``.
        epsilon: Semiclassical parameter.
        period: Label period of a circle chart.
        grid_shape: Label grid shape of a grid chart, None for curves.
    """

    labels: np.ndarray
    q: np.ndarray
    p: np.ndarray
    weights: np.ndarray
    phases: np.ndarray
    maslov: np.ndarray
    epsilon: float
    base_index: int = 0
    topology: Topology = Topology.LINE
    period: Optional[float] = None
    grid_shape: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        labels = np.array(self.labels, dtype=float)
        q = np.array(self.q, dtype=float)
        p = np.array(self.p, dtype=float)
        if q.ndim == 1:
            q = q[:, None]
        if p.ndim == 1:
            p = p[:, None]
        weights = np.array(self.weights, dtype=float)
        phases = np.array(self.phases, dtype=float)
        maslov = np.array(self.maslov, dtype=int)
        n_markers = labels.shape[0]

        if labels.ndim != 1 or n_markers < 2:
            raise ChartError("A chart needs a one-dimensional label array with two markers or more.")
        if q.shape != p.shape or q.shape[0] != n_markers:
            raise ChartError(
                f"Point arrays of shape {q.shape} and {p.shape} do not match {n_markers} labels."
            )
        for name, array in (("weights", weights), ("phases", phases), ("maslov", maslov)):
            if array.shape != (n_markers,):
                raise ChartError(f"'{name}' has shape {array.shape}, expected ({n_markers},).")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p)) and np.all(np.isfinite(phases))):
            raise ChartError("Chart points and phases must be finite.")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            bad = int(np.flatnonzero(~(weights >= 0))[0]) if np.any(~(weights >= 0)) else -1
            raise ChartError("Chart weights must be finite and non-negative.", index=bad)
        if not np.all(np.diff(labels) > 0):
            raise ChartError("Chart labels must be strictly increasing.")
        if not self.epsilon > 0:
            raise ChartError(f"epsilon must be positive, got {self.epsilon}.")
        if not 0 <= int(self.base_index) < n_markers:
            raise ChartError(f"base_index {self.base_index} is out of range.")

        topology = Topology(self.topology)
        grid_shape = tuple(int(k) for k in self.grid_shape) if self.grid_shape is not None else None
        if grid_shape is not None:
            if int(np.prod(grid_shape)) != n_markers or len(grid_shape) != q.shape[1]:
                raise ChartError(
                    f"Grid shape {grid_shape} does not fit {n_markers} markers in dimension {q.shape[1]}."
                )
            if topology != Topology.LINE:
                raise ChartError("Grid charts are open.")
        elif q.shape[1] != 1:
            raise ChartError("Charts in dimension n > 1 need a grid_shape.")

        period = self.period
        if topology == Topology.CIRCLE:
            if period is None or not period > labels[-1] - labels[0]:
                raise ChartError("A circle chart needs a period larger than its label span.")
            period = float(period)
        else:
            period = None

        for array in (labels, q, p, weights, phases, maslov):
            array.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "phases", phases)
        object.__setattr__(self, "maslov", maslov)
        object.__setattr__(self, "epsilon", float(self.epsilon))
        object.__setattr__(self, "base_index", int(self.base_index))
        object.__setattr__(self, "topology", topology)
        object.__setattr__(self, "period", period)
        object.__setattr__(self, "grid_shape", grid_shape)

    @property
    def n_markers(self) -> int:
        return self.labels.shape[0]

    @property
    def dim(self) -> int:
        return self.q.shape[1]

    @property
    def is_grid(self) -> bool:
        return self.grid_shape is not None

    @property
    def is_closed(self) -> bool:
        return self.topology == Topology.CIRCLE

    def replace(self, **changes) -> "MarkerChart":
        return dataclasses.replace(self, **changes)

    def header(self) -> dict:
        """Metadata written in the chart file header."""
        return {
            "topology": self.topology.value,
            "base_index": self.base_index,
            "epsilon": self.epsilon,
            "period": self.period,
            "grid_shape": list(self.grid_shape) if self.grid_shape is not None else None,
        }


@dataclass(frozen=True)
class GaugeMap:
    """A relabelling of the chart isotopic to the identity.

    Attributes:
        shift: Cyclic shift of the markers of a circle chart. Marker ``j`` of the result is
            marker ``j + shift`` of the input.
        relabel: Strictly increasing map applied to the labels after the shift.
    """

    shift: int = 0
    relabel: Optional[Callable[[np.ndarray], np.ndarray]] = None


@dataclass(frozen=True)
class QuantizationData:
    loop_action: float
    maslov_index: int
    bs_residual: float
    bs_integer: int


def require_curve(chart: MarkerChart, operation: str) -> None:
    if chart.is_grid:
        raise ChartError(f"'{operation}' needs a curve chart, got a grid chart.", operation=operation)


def quadrature_weights(chart: MarkerChart) -> np.ndarray:
    """Trapezoid weights of the markers in the label coordinate."""
    if chart.is_grid:
        return np.ones(chart.n_markers)
    x = chart.labels
    if chart.is_closed:
        assert chart.period is not None
        after = np.append(x[1:], x[0] + chart.period)
        before = np.insert(x[:-1], 0, x[-1] - chart.period)
        return (after - before) / 2
    gaps = np.diff(x)
    return np.concatenate(([gaps[0] / 2], (gaps[:-1] + gaps[1:]) / 2, [gaps[-1] / 2]))


def total_weight(chart: MarkerChart) -> float:
    return float(np.sum(quadrature_weights(chart) * chart.weights))


def weight_integrability(chart: MarkerChart) -> float:
    """Total weight of the chart.

    Raises:
        ChartError: If it is not finite.
    """
    total = total_weight(chart)
    if not math.isfinite(total):
        raise ChartError("The total weight of the chart is not finite.")
    return total


def segment_actions(q: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Trapezoid of ``p . dq`` along consecutive points, one value per segment."""
    return np.sum((p[1:] + p[:-1]) / 2 * (q[1:] - q[:-1]), axis=1)


def closure_action(chart: MarkerChart) -> float:
    """Trapezoid of ``p . dq`` from the last marker back to the first."""
    return float(np.sum((chart.p[0] + chart.p[-1]) / 2 * (chart.q[0] - chart.q[-1])))


def section_phases(q: np.ndarray, p: np.ndarray, base_index: int, base_phase: float = 0.0) -> np.ndarray:
    """Phases obtained by integrating ``p . dq`` along the markers from the base marker."""
    steps = segment_actions(q, p)
    cumulative = np.concatenate(([0.0], np.cumsum(steps)))
    return base_phase + cumulative - cumulative[base_index]


def tangent_angles(chart: MarkerChart) -> np.ndarray:
    """Angle of the curve tangent at each marker, from neighbour differences."""
    require_curve(chart, "tangent_angles")
    z = np.column_stack((chart.q[:, 0], chart.p[:, 0]))
    if chart.is_closed:
        tangent = np.roll(z, -1, axis=0) - np.roll(z, 1, axis=0)
    else:
        tangent = np.empty_like(z)
        tangent[1:-1] = z[2:] - z[:-2]
        tangent[0] = z[1] - z[0]
        tangent[-1] = z[-1] - z[-2]
    return np.arctan2(tangent[:, 1], tangent[:, 0])


def vertical_crossings(theta_old: np.ndarray, theta_new: np.ndarray) -> np.ndarray:
    """Signed passages of a tangent through the vertical between two angles.

    The rotation is the shortest one. A clockwise passage counts +1 and a counterclockwise one
    -1. Angles within ``ANGLE_SNAP`` of the vertical count as having reached it, and the
    interval is closed on the arrival side so a passage is never counted twice.
    """
    theta_old = np.asarray(theta_old, dtype=float)
    delta = np.angle(np.exp(1j * (np.asarray(theta_new, dtype=float) - theta_old)))
    c_old = _snap((theta_old - np.pi / 2) / np.pi)
    c_new = _snap((theta_old + delta - np.pi / 2) / np.pi)
    clockwise = np.ceil(c_old) - np.ceil(c_new)
    counter = np.floor(c_new) - np.floor(c_old)
    return np.where(delta < 0, clockwise, np.where(delta > 0, -counter, 0)).astype(int)


def _snap(c: np.ndarray) -> np.ndarray:
    nearest = np.round(c)
    return np.where(np.abs(c - nearest) * np.pi < ANGLE_SNAP, nearest, c)


def walk_counters(theta: np.ndarray, base_index: int, base_counter: int = 0) -> np.ndarray:
    """Counters obtained by walking the markers from the base marker."""
    steps = vertical_crossings(theta[:-1], theta[1:])
    cumulative = np.concatenate(([0], np.cumsum(steps)))
    return base_counter + cumulative - cumulative[base_index]


def loop_increment(chart: MarkerChart) -> int:
    """Counter change accumulated by the segment tangents around a closed chart."""
    z = np.column_stack((chart.q[:, 0], chart.p[:, 0]))
    segment = np.roll(z, -1, axis=0) - z
    theta = np.arctan2(segment[:, 1], segment[:, 0])
    return int(np.sum(vertical_crossings(theta, np.roll(theta, -1))))


def _check_grid(nodes: np.ndarray) -> np.ndarray:
    nodes = np.asarray(nodes, dtype=float)
    if nodes.ndim != 1 or nodes.shape[0] < 2:
        raise ChartError("A label grid needs at least two nodes.")
    if not np.all(np.diff(nodes) > 0):
        raise ChartError("Label grid nodes must be strictly increasing.")
    return nodes


def _trapezoid_1d(nodes: np.ndarray) -> np.ndarray:
    gaps = np.diff(nodes)
    return np.concatenate(([gaps[0] / 2], (gaps[:-1] + gaps[1:]) / 2, [gaps[-1] / 2]))


def init_from_phase_function(
    S: Union[str, sympy.Expr, Callable[..., np.ndarray]],
    amp: Union[str, sympy.Expr, Callable[..., np.ndarray]],
    grid: Union[np.ndarray, Sequence[np.ndarray]],
    epsilon: float,
    dS: Optional[Callable[..., np.ndarray]] = None,
) -> MarkerChart:
    """
    Chart of the graph ``p = grad S`` over a configuration grid.

    Args:
        S: Phase, an expression in ``q`` (``q0, q1, ..`` on grids) or a vectorized callable.
        amp: Amplitude, same forms. Weights are ``amp**2``.
        grid: Nodes of a line chart, or one node array per axis for a grid chart.
        epsilon: Semiclassical parameter.
        dS: Gradient of a callable ``S``. Ignored for expressions.

    Raises:
        ChartError: Non-monotone grid, or a callable ``S`` without ``dS``.
    """
    is_grid = not isinstance(grid, np.ndarray) and len(grid) > 0 and np.ndim(grid[0]) == 1
    axes = [_check_grid(g) for g in grid] if is_grid else [_check_grid(np.asarray(grid))]
    if is_grid and len(axes) == 1:
        is_grid = False
    dim = len(axes)
    q_names, _ = phase_space_symbols(dim)

    mesh = np.meshgrid(*axes, indexing="ij")
    columns = [m.ravel() for m in mesh]
    q = np.column_stack(columns)

    if isinstance(S, (str, sympy.Expr)):
        phase_fn = compile_scalar(S, q_names)
        phases = phase_fn(*columns)
        parser = ExpressionParser(q_names)
        expr = parser.parse(S) if isinstance(S, str) else S
        p = np.column_stack(
            [compile_scalar(sympy.diff(expr, parser.symbols[name]), q_names)(*columns) for name in q_names]
        )
    else:
        if dS is None:
            raise ChartError("A callable phase needs its gradient 'dS'.")
        phases = np.asarray(S(*columns), dtype=float)
        p = np.asarray(dS(*columns), dtype=float).reshape(q.shape)

    if isinstance(amp, (str, sympy.Expr)):
        amplitude = compile_scalar(amp, q_names)(*columns)
    else:
        amplitude = np.asarray(amp(*columns), dtype=float)
    weights = amplitude**2

    if is_grid:
        cell = np.ones(q.shape[0])
        for axis, nodes in enumerate(axes):
            cell *= _trapezoid_1d(nodes)[np.unravel_index(np.arange(q.shape[0]), mesh[0].shape)[axis]]
        return MarkerChart(
            labels=np.arange(q.shape[0], dtype=float),
            q=q,
            p=p,
            weights=weights * cell,
            phases=phases,
            maslov=np.zeros(q.shape[0], dtype=int),
            epsilon=epsilon,
            grid_shape=tuple(mesh[0].shape),
        )
    return MarkerChart(
        labels=axes[0],
        q=q,
        p=p,
        weights=weights,
        phases=phases,
        maslov=np.zeros(q.shape[0], dtype=int),
        epsilon=epsilon,
    )


def circle_chart(radius: float, n: int, epsilon: float, base_index: int = 0) -> MarkerChart:
    """The phase-space circle ``q**2 + p**2 = radius**2`` traversed clockwise, total weight 1."""
    if not radius > 0 or n < 3:
        raise ChartError("A circle chart needs a positive radius and three markers or more.")
    x = 2 * np.pi * np.arange(n) / n
    q = (radius * np.cos(x))[:, None]
    p = (-radius * np.sin(x))[:, None]
    provisional = MarkerChart(
        labels=x,
        q=q,
        p=p,
        weights=np.full(n, 1 / (2 * np.pi)),
        phases=section_phases(q, p, base_index),
        maslov=np.zeros(n, dtype=int),
        epsilon=epsilon,
        base_index=base_index,
        topology=Topology.CIRCLE,
        period=2 * np.pi,
    )
    return provisional.replace(maslov=walk_counters(tangent_angles(provisional), base_index))


def quantization_data(chart: MarkerChart) -> QuantizationData:
    """
    Loop action, Maslov index and corrected Bohr-Sommerfeld residual of a closed chart.

    Raises:
        OpenTopology: If the chart is not a circle.
    """
    if not chart.is_closed:
        raise OpenTopology("Line charts have no loop class.", topology=chart.topology.value)
    loop_action = float(np.sum(segment_actions(chart.q, chart.p)) + closure_action(chart))
    maslov_index = -loop_increment(chart)
    eps = chart.epsilon
    total = (eps * np.pi / 2) * maslov_index + loop_action
    bs_integer = int(np.round(total / (2 * np.pi * eps)))
    return QuantizationData(
        loop_action=loop_action,
        maslov_index=maslov_index,
        bs_residual=float(abs(total - 2 * np.pi * eps * bs_integer)),
        bs_integer=bs_integer,
    )


def _distance_to_lattice(value: float, spacing: float) -> float:
    return float(abs(value - spacing * np.round(value / spacing)))


def phase_coherence_residual(chart: MarkerChart) -> float:
    """Largest gap between stored phase increments and the trapezoid of ``p . dq``.

    On a circle the closure segment counts only when the chart satisfies the corrected
    Bohr-Sommerfeld condition, and it is then compared modulo ``2 pi epsilon`` with the
    Maslov counters folded in. Grid charts use the edges along every grid axis.
    """
    if chart.is_grid:
        assert chart.grid_shape is not None
        shape = chart.grid_shape
        Q = chart.q.reshape(*shape, chart.dim)
        P = chart.p.reshape(*shape, chart.dim)
        S = chart.phases.reshape(shape)
        worst = 0.0
        for axis in range(chart.dim):
            lo = tuple(slice(None, -1) if k == axis else slice(None) for k in range(chart.dim))
            hi = tuple(slice(1, None) if k == axis else slice(None) for k in range(chart.dim))
            edge = np.sum((P[lo] + P[hi]) / 2 * (Q[hi] - Q[lo]), axis=-1)
            worst = max(worst, float(np.max(np.abs(S[hi] - S[lo] - edge))))
        return worst

    residual = np.abs(np.diff(chart.phases) - segment_actions(chart.q, chart.p))
    worst = float(np.max(residual))
    if chart.is_closed:
        data = quantization_data(chart)
        if data.bs_residual <= LAGRANGIAN_TOL * max(1.0, abs(data.loop_action)):
            theta = tangent_angles(chart)
            jump = chart.maslov[0] - chart.maslov[-1] - int(vertical_crossings(theta[-1], theta[0]))
            mismatch = (
                chart.phases[0]
                - chart.phases[-1]
                - closure_action(chart)
                - chart.epsilon * np.pi / 2 * jump
            )
            worst = max(worst, _distance_to_lattice(mismatch, 2 * np.pi * chart.epsilon))
    return worst


def reduced_phases(chart: MarkerChart) -> Tuple[np.ndarray, np.ndarray]:
    """Phases reduced modulo ``epsilon pi / 2`` and the quarter-turn counts modulo 4.

    ``exp(i (S / eps - sigma pi / 2)) == exp(i r / eps) * 1j**k`` for the returned ``(r, k)``.
    """
    quantum = chart.epsilon * np.pi / 2
    quarters = np.floor(chart.phases / quantum)
    remainder = chart.phases - quarters * quantum
    return remainder, np.mod(quarters.astype(int) - chart.maslov, 4)


def lagrangian_defect(chart: MarkerChart) -> float:
    """Largest plaquette circulation of ``p . dq`` on a grid chart, 0 for curves."""
    if not chart.is_grid:
        return 0.0
    assert chart.grid_shape is not None
    shape = chart.grid_shape
    n = chart.dim
    Q = chart.q.reshape(*shape, n)
    P = chart.p.reshape(*shape, n)

    def corner(a: int, b: int, da: int, db: int) -> tuple:
        index = []
        for k in range(n):
            if k == a:
                index.append(slice(1, None) if da else slice(None, -1))
            elif k == b:
                index.append(slice(1, None) if db else slice(None, -1))
            else:
                index.append(slice(None))
        return tuple(index)

    def edge(start: tuple, end: tuple) -> np.ndarray:
        return np.sum((P[start] + P[end]) / 2 * (Q[end] - Q[start]), axis=-1)

    worst = 0.0
    for a in range(n):
        for b in range(a + 1, n):
            c00, c10 = corner(a, b, 0, 0), corner(a, b, 1, 0)
            c11, c01 = corner(a, b, 1, 1), corner(a, b, 0, 1)
            circulation = edge(c00, c10) + edge(c10, c11) + edge(c11, c01) + edge(c01, c00)
            if circulation.size:
                worst = max(worst, float(np.max(np.abs(circulation))))
    return worst


def check_lagrangian(chart: MarkerChart, tol: float = LAGRANGIAN_TOL) -> None:
    """
    Raises:
        ChartError: If the plaquette circulation of a grid chart exceeds ``tol``.
    """
    defect = lagrangian_defect(chart)
    if defect > tol:
        raise ChartError("The grid chart is not Lagrangian.", defect=defect, tolerance=tol)


def gauge_transform(chart: MarkerChart, g: GaugeMap) -> MarkerChart:
    """
    Relabel a curve chart.

    A circle shift re-anchors the phases and counters of the markers that move across the
    cut by the loop action and the loop counter increment. Weights are divided by the ratio
    of new to old trapezoid weights, so total weight and wave action are unchanged.

    Raises:
        OrientationError: If the relabelling is not strictly increasing or does not fit the
            period, or a line chart is given a shift.
    """
    require_curve(chart, "gauge_transform")
    labels, q, p = chart.labels, chart.q, chart.p
    weights, phases, maslov = chart.weights, chart.phases, chart.maslov
    old_w = quadrature_weights(chart)

    if g.shift:
        if not chart.is_closed:
            raise OrientationError("Only circle charts can be shifted.", shift=g.shift)
        assert chart.period is not None
        n = chart.n_markers
        k = int(g.shift) % n
        theta = tangent_angles(chart)
        loop_phase = phases[-1] + closure_action(chart) - phases[0]
        loop_counter = maslov[-1] + int(vertical_crossings(theta[-1], theta[0])) - maslov[0]
        order = (np.arange(n) + k) % n
        wrapped = np.arange(n) + k >= n
        labels = labels[order] + np.where(wrapped, chart.period, 0.0) - (labels[k] - labels[0])
        q, p, weights, old_w = q[order], p[order], weights[order], old_w[order]
        phases = phases[order] + np.where(wrapped, loop_phase, 0.0)
        maslov = maslov[order] + np.where(wrapped, loop_counter, 0)

    if g.relabel is not None:
        new_labels = np.asarray(g.relabel(labels.copy()), dtype=float)
        if new_labels.shape != labels.shape or not np.all(np.isfinite(new_labels)):
            raise OrientationError("The relabelling is not a bijection of the labels.")
        if not np.all(np.diff(new_labels) > 0):
            raise OrientationError("The relabelling does not preserve orientation.")
        if chart.is_closed:
            assert chart.period is not None
            if not new_labels[-1] - new_labels[0] < chart.period:
                raise OrientationError("The relabelling does not fit in one period.")
        labels = new_labels

    try:
        moved = chart.replace(labels=labels, q=q, p=p, weights=weights, phases=phases, maslov=maslov)
    except ChartError as error:
        raise OrientationError(f"The relabelled chart is invalid: {error.message}") from error
    jacobian = quadrature_weights(moved) / old_w
    return moved.replace(weights=weights / jacobian)


def refine(chart: MarkerChart, max_spacing: float, max_passes: int = MAX_REFINE_PASSES) -> MarkerChart:
    """
    Insert midpoint markers on every segment longer than ``max_spacing`` in q or p.

    New points come from a cubic spline of the markers in the label, weights are interpolated
    linearly so the total weight is unchanged, phases continue the segment integral of
    ``p . dq`` and counters are copied from the left neighbour.
    """
    require_curve(chart, "refine")
    if not max_spacing > 0:
        raise ChartError(f"max_spacing must be positive, got {max_spacing}.")
    for _ in range(max_passes):
        refined = _refine_once(chart, max_spacing)
        if refined is chart:
            return chart
        logger.debug(f"Refinement inserted {refined.n_markers - chart.n_markers} markers.")
        chart = refined
    return chart


def _refine_once(chart: MarkerChart, max_spacing: float) -> MarkerChart:
    x, q, p = chart.labels, chart.q[:, 0], chart.p[:, 0]
    closed = chart.is_closed
    if closed:
        assert chart.period is not None
        x_ext = np.append(x, x[0] + chart.period)
        q_ext, p_ext = np.append(q, q[0]), np.append(p, p[0])
        w_ext = np.append(chart.weights, chart.weights[0])
        bc = "periodic"
    else:
        x_ext, q_ext, p_ext, w_ext = x, q, p, chart.weights
        bc = "not-a-knot"

    long = (np.abs(np.diff(q_ext)) > max_spacing) | (np.abs(np.diff(p_ext)) > max_spacing)
    if not np.any(long):
        return chart

    q_spline = CubicSpline(x_ext, q_ext, bc_type=bc) if len(x_ext) > 3 or closed else None
    p_spline = CubicSpline(x_ext, p_ext, bc_type=bc) if len(x_ext) > 3 or closed else None
    segments = np.flatnonzero(long)
    x_mid = (x_ext[segments] + x_ext[segments + 1]) / 2
    if q_spline is not None and p_spline is not None:
        q_mid, p_mid = q_spline(x_mid), p_spline(x_mid)
    else:
        q_mid = (q_ext[segments] + q_ext[segments + 1]) / 2
        p_mid = (p_ext[segments] + p_ext[segments + 1]) / 2
    w_mid = (w_ext[segments] + w_ext[segments + 1]) / 2
    left = segments % chart.n_markers
    s_mid = chart.phases[left] + (p_ext[segments] + p_mid) / 2 * (q_mid - q_ext[segments])

    position = segments + 1
    base_index = chart.base_index + int(np.sum(position <= chart.base_index))
    return chart.replace(
        labels=np.insert(x, position, x_mid),
        q=np.insert(q, position, q_mid)[:, None],
        p=np.insert(p, position, p_mid)[:, None],
        weights=np.insert(chart.weights, position, w_mid),
        phases=np.insert(chart.phases, position, s_mid),
        maslov=np.insert(chart.maslov, position, chart.maslov[left]),
        base_index=base_index,
    )


@dataclass(frozen=True)
class QuantizedLevel:
    n: int
    radius: float
    r_squared: float
    energy: Optional[float]
    bs_residual: float


def quantize_circles(
    epsilon: float,
    radius_range: Tuple[float, float],
    n_levels: int,
    n_markers: int = 4096,
    energy_fn: Optional[Callable[[MarkerChart], float]] = None,
) -> List[QuantizedLevel]:
    """
    Radii of phase-space circles that satisfy the corrected Bohr-Sommerfeld condition.

    The quantum number of a circle of radius r is ``((eps pi / 2) m + L(r)) / (2 pi eps)``.
    Consecutive integers are located with Brent's method, starting from the first integer
    reachable inside ``radius_range``.

    Args:
        epsilon: Semiclassical parameter.
        radius_range: Search interval of radii.
        n_levels: Number of consecutive levels requested.
        n_markers: Markers of each trial circle.
        energy_fn: Optional map from a quantized chart to the reported energy.
    """
    r_min, r_max = radius_range
    if not 0 < r_min < r_max:
        raise ChartError(f"Invalid radius range {radius_range}.")

    def quantum_number(radius: float) -> float:
        data = quantization_data(circle_chart(radius, n_markers, epsilon))
        total = (epsilon * np.pi / 2) * data.maslov_index + data.loop_action
        return total / (2 * np.pi * epsilon)

    low, high = quantum_number(r_min), quantum_number(r_max)
    levels = []
    for n in range(math.ceil(low), math.ceil(low) + n_levels):
        if n > high:
            logger.warning(f"Level {n} lies outside radius range {radius_range}, stopping.")
            break
        radius = brentq(lambda r: quantum_number(r) - n, r_min, r_max, xtol=1e-14, rtol=1e-14)
        chart = circle_chart(radius, n_markers, epsilon)
        data = quantization_data(chart)
        energy = energy_fn(chart) if energy_fn is not None else None
        logger.info(f"Level {n}: radius {radius!r}.")
        levels.append(
            QuantizedLevel(
                n=n,
                radius=float(radius),
                r_squared=float(radius**2),
                energy=energy,
                bs_residual=data.bs_residual,
            )
        )
    return levels
