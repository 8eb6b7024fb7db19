"""Wave field synthesis from a curve chart.

Away from caustics the field at ``q`` is a sum over the chart branches crossing ``q``. Near a
caustic the branches crossing the caustic are replaced by an oscillatory integral over the
momentum chart, blended with the remaining branches by a partition of unity in ``p``.
"""

import logging
import math

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline

from .exceptions import CausticAtQuery, UnresolvedCaustic
from .manifold import MarkerChart, closure_action, require_curve, tangent_angles, vertical_crossings

logger = logging.getLogger(__name__)

CAUSTIC_THRESHOLD = 0.1
TAPER_FRACTION = 0.15
POINTS_PER_CYCLE = 16
MIN_INTEGRAL_POINTS = 257
VERTICAL_TOL = 1e-8


class Method(str, Enum):
    BRANCH_SUM = "branch_sum"
    MOMENTUM_INTEGRAL = "momentum_integral"


@dataclass(frozen=True)
class Branch:
    """A crossing of the chart with the vertical line through the query point.

    Attributes:
        segment_index: Index of the crossed segment. On circles the last one closes the loop.
        q, p: Interpolated point on the segment.
        amplitude: Square root of the interpolated ``weight / |dq/dx|``.
        phase: Unreduced phase, the left marker phase continued by the segment integral.
        maslov: Counter of the segment end lying on the same side of the vertical.
        jacobian: Segment projection Jacobian ``dq/dx``.
        flagged: Whether ``jacobian`` is under the caustic threshold.
    """

    segment_index: int
    q: float
    p: float
    amplitude: float
    phase: float
    maslov: int
    jacobian: float
    flagged: bool = False

    def contribution(self, epsilon: float) -> complex:
        return self.amplitude * np.exp(1j * (self.phase / epsilon - self.maslov * np.pi / 2))


@dataclass(frozen=True)
class FieldSample:
    q: float
    value: complex
    branches: Tuple[Branch, ...]
    method: Method


@dataclass(frozen=True, eq=False)
class _Geometry:
    """Per-segment and per-marker data shared by every query on one chart."""

    chart: MarkerChart
    left: np.ndarray
    right: np.ndarray
    q_left: np.ndarray
    q_right: np.ndarray
    p_left: np.ndarray
    p_right: np.ndarray
    amp2_left: np.ndarray
    amp2_right: np.ndarray
    sigma_right: np.ndarray
    dq_dx: np.ndarray
    dp_dx: np.ndarray
    flagged: np.ndarray
    p_degenerate: np.ndarray
    marker_dq: np.ndarray
    marker_dp: np.ndarray
    vertical: np.ndarray
    loop_phase: float
    loop_counter: int

    @property
    def n_segments(self) -> int:
        return self.left.shape[0]


def _marker_jacobians(chart: MarkerChart) -> Tuple[np.ndarray, np.ndarray]:
    """Centred differences ``dq/dx``, ``dp/dx`` at the markers, one-sided at line ends."""
    x, q, p = chart.labels, chart.q[:, 0], chart.p[:, 0]
    if chart.is_closed:
        assert chart.period is not None
        span = np.roll(x, -1) - np.roll(x, 1)
        span[0] += chart.period
        span[-1] += chart.period
        return (np.roll(q, -1) - np.roll(q, 1)) / span, (np.roll(p, -1) - np.roll(p, 1)) / span
    dq, dp = np.empty_like(q), np.empty_like(p)
    span = x[2:] - x[:-2]
    dq[1:-1], dp[1:-1] = (q[2:] - q[:-2]) / span, (p[2:] - p[:-2]) / span
    dq[0], dp[0] = (q[1] - q[0]) / (x[1] - x[0]), (p[1] - p[0]) / (x[1] - x[0])
    dq[-1], dp[-1] = (q[-1] - q[-2]) / (x[-1] - x[-2]), (p[-1] - p[-2]) / (x[-1] - x[-2])
    return dq, dp


def _geometry(chart: MarkerChart, caustic_threshold: float) -> _Geometry:
    require_curve(chart, "reconstruct")
    n = chart.n_markers
    x, q, p = chart.labels, chart.q[:, 0], chart.p[:, 0]
    theta = tangent_angles(chart)
    if chart.is_closed:
        assert chart.period is not None
        left = np.arange(n)
        dx = np.append(np.diff(x), x[0] + chart.period - x[-1])
        loop_phase = float(chart.phases[-1] + closure_action(chart) - chart.phases[0])
        loop_counter = int(chart.maslov[-1] + int(vertical_crossings(theta[-1], theta[0])) - chart.maslov[0])
    else:
        left = np.arange(n - 1)
        dx = np.diff(x)
        loop_phase, loop_counter = 0.0, 0
    right = (left + 1) % n

    marker_dq, marker_dp = _marker_jacobians(chart)
    with np.errstate(divide="ignore"):
        amp2 = chart.weights / np.abs(marker_dq)
    sigma_right = chart.maslov[right].copy()
    if chart.is_closed:
        sigma_right[-1] += loop_counter

    dq_dx = (q[right] - q[left]) / dx
    dp_dx = (p[right] - p[left]) / dx
    scale = float(np.median(np.hypot(dq_dx, dp_dx)))
    return _Geometry(
        chart=chart,
        left=left,
        right=right,
        q_left=q[left],
        q_right=q[right],
        p_left=p[left],
        p_right=p[right],
        amp2_left=amp2[left],
        amp2_right=amp2[right],
        sigma_right=sigma_right,
        dq_dx=dq_dx,
        dp_dx=dp_dx,
        flagged=np.abs(dq_dx) < caustic_threshold * scale,
        p_degenerate=np.abs(dp_dx) < caustic_threshold * scale,
        marker_dq=marker_dq,
        marker_dp=marker_dp,
        vertical=np.abs(np.cos(theta)) < VERTICAL_TOL,
        loop_phase=loop_phase,
        loop_counter=loop_counter,
    )


def _branches(geometry: _Geometry, q: float) -> List[Branch]:
    chart = geometry.chart
    lo = geometry.q_left - q
    hi = geometry.q_right - q
    crossing = ((lo <= 0) & (hi > 0)) | ((lo >= 0) & (hi < 0)) | ((lo == 0) & (hi == 0))
    if not chart.is_closed:
        crossing[-1] |= hi[-1] == 0
    branches = []
    for k in np.flatnonzero(crossing):
        span = geometry.q_right[k] - geometry.q_left[k]
        t = (q - geometry.q_left[k]) / span if span != 0 else 0.0
        p = geometry.p_left[k] + t * (geometry.p_right[k] - geometry.p_left[k])
        amp2 = (1 - t) * geometry.amp2_left[k] + t * geometry.amp2_right[k]
        i, j = geometry.left[k], geometry.right[k]
        phase = chart.phases[i] + (q - geometry.q_left[k]) * (geometry.p_left[k] + p) / 2

        direction = np.sign(span)
        ends = [(chart.maslov[i], geometry.marker_dq[i]), (geometry.sigma_right[k], geometry.marker_dq[j])]
        if t > 0.5:
            ends.reverse()
        maslov = next((sigma for sigma, slope in ends if np.sign(slope) == direction), ends[0][0])

        branches.append(
            Branch(
                segment_index=int(k),
                q=float(q),
                p=float(p),
                amplitude=float(math.sqrt(amp2)) if math.isfinite(amp2) else math.inf,
                phase=float(phase),
                maslov=int(maslov),
                jacobian=float(geometry.dq_dx[k]),
                flagged=bool(geometry.flagged[k]),
            )
        )
    return branches


def branches_at(chart: MarkerChart, q: float, caustic_threshold: float = CAUSTIC_THRESHOLD) -> List[Branch]:
    """Branches of the chart over ``q`` ordered by segment index. Empty outside the chart."""
    return _branches(_geometry(chart, caustic_threshold), float(q))


@dataclass(frozen=True)
class _MomentumRun:
    """A maximal range of segments on which the chart is a regular graph over ``p``."""

    segments: frozenset
    p: np.ndarray
    q: np.ndarray
    amplitude: np.ndarray
    phase_ref: float
    p_ref: float
    sigma: int
    taper_low: bool
    taper_high: bool

    @property
    def p_min(self) -> float:
        return float(self.p[0])

    @property
    def p_max(self) -> float:
        return float(self.p[-1])

    def taper(self, p: np.ndarray) -> np.ndarray:
        """Smooth weight equal to 1 inside the run, going to 0 at ends shared with other branches."""
        p = np.asarray(p, dtype=float)
        width = TAPER_FRACTION * (self.p_max - self.p_min)
        chi = np.where((p >= self.p_min) & (p <= self.p_max), 1.0, 0.0)
        if self.taper_low:
            chi = chi * np.sin(np.pi / 2 * np.clip((p - self.p_min) / width, 0.0, 1.0)) ** 2
        if self.taper_high:
            chi = chi * np.sin(np.pi / 2 * np.clip((self.p_max - p) / width, 0.0, 1.0)) ** 2
        return chi


def _momentum_run(geometry: _Geometry, seed: int) -> _MomentumRun:
    chart = geometry.chart
    m = geometry.n_segments
    if geometry.p_degenerate[seed]:
        raise UnresolvedCaustic(
            "The momentum chart is degenerate at the caustic.", segment_index=int(seed), q=float(geometry.q_left[seed])
        )
    sign = np.sign(geometry.dp_dx[seed])

    def regular(k: int) -> bool:
        return not geometry.p_degenerate[k] and np.sign(geometry.dp_dx[k]) == sign

    segments = [seed]
    k = seed
    while len(segments) < m and (chart.is_closed or k > 0):
        k = (k - 1) % m
        if not regular(k):
            break
        segments.insert(0, k)
    k = seed
    while len(segments) < m and (chart.is_closed or k < m - 1):
        k = (k + 1) % m
        if not regular(k):
            break
        segments.append(k)

    markers = [int(geometry.left[segments[0]])] + [int(geometry.right[k]) for k in segments]
    phase_offset, counter_offset = np.zeros(len(markers)), np.zeros(len(markers), dtype=int)
    for position, k in enumerate(segments, start=1):
        phase_offset[position] = phase_offset[position - 1]
        counter_offset[position] = counter_offset[position - 1]
        if chart.is_closed and k == m - 1:
            phase_offset[position] += geometry.loop_phase
            counter_offset[position] += geometry.loop_counter
    markers_arr = np.array(markers)
    p = chart.p[markers_arr, 0]
    q = chart.q[markers_arr, 0]
    phases = chart.phases[markers_arr] + phase_offset
    sigma = chart.maslov[markers_arr] + counter_offset
    dq, dp = geometry.marker_dq[markers_arr], geometry.marker_dp[markers_arr]
    amplitude = np.sqrt(chart.weights[markers_arr] / np.maximum(np.abs(dp), np.finfo(float).tiny))

    # counter of the momentum chart: one quarter turn less where q grows with p
    regular_markers = ~geometry.vertical[markers_arr]
    shifted = sigma - (np.sign(dq) * np.sign(dp) > 0).astype(int)
    if np.any(regular_markers):
        values = np.unique(shifted[regular_markers])
        if values.shape[0] > 1:
            raise UnresolvedCaustic(
                "Maslov counters are not constant on the momentum chart.",
                segment_index=int(seed),
                counters=values,
            )
        sigma_tilde = int(values[0])
    else:
        sigma_tilde = int(sigma[0]) - 1

    line_end = not chart.is_closed
    ends = (line_end and segments[0] == 0, line_end and segments[-1] == m - 1)
    if p[0] > p[-1]:
        p, q, phases, amplitude = p[::-1], q[::-1], phases[::-1], amplitude[::-1]
        ends = ends[::-1]
    ref = len(p) // 2
    return _MomentumRun(
        segments=frozenset(segments),
        p=p,
        q=q,
        amplitude=amplitude,
        phase_ref=float(phases[ref] - p[ref] * q[ref]),
        p_ref=float(p[ref]),
        sigma=sigma_tilde,
        taper_low=not ends[0],
        taper_high=not ends[1],
    )


def _momentum_integral(run: _MomentumRun, q: float, epsilon: float) -> complex:
    """``(2 pi i eps)**-1/2 * integral chi(p) a(p) exp(i (phase(p) + p q) / eps) dp``."""
    q_of_p = CubicSpline(run.p, run.q)
    primitive = q_of_p.antiderivative()
    amplitude = CubicSpline(run.p, run.amplitude)

    spread = float(np.max(np.abs(run.q - q)))
    cycles = (run.p_max - run.p_min) * spread / (2 * np.pi * epsilon)
    n_points = max(MIN_INTEGRAL_POINTS, math.ceil(POINTS_PER_CYCLE * cycles) + 1, 8 * len(run.p))
    grid = np.linspace(run.p_min, run.p_max, n_points)

    phase = run.phase_ref - (primitive(grid) - primitive(run.p_ref)) + grid * q
    integrand = run.taper(grid) * np.clip(amplitude(grid), 0.0, None) * np.exp(1j * phase / epsilon)
    prefactor = np.exp(-1j * np.pi / 4) / math.sqrt(2 * np.pi * epsilon)
    return complex(prefactor * np.exp(-1j * run.sigma * np.pi / 2) * trapezoid(integrand, grid))


def _hybrid(geometry: _Geometry, q: float, branches: List[Branch], seeds: Sequence[int]) -> complex:
    epsilon = geometry.chart.epsilon
    runs: List[_MomentumRun] = []
    for seed in seeds:
        if not any(seed in run.segments for run in runs):
            runs.append(_momentum_run(geometry, seed))

    value = 0j
    for run in runs:
        value += _momentum_integral(run, q, epsilon)
    for branch in branches:
        weight = 1.0
        for run in runs:
            if branch.segment_index in run.segments:
                weight -= float(run.taper(np.array([branch.p]))[0])
        if weight <= 1e-12:
            continue
        if branch.flagged:
            raise UnresolvedCaustic(
                "A caustic branch lies where the momentum chart tapers off.",
                segment_index=branch.segment_index,
                q=q,
            )
        value += weight * branch.contribution(epsilon)
    return value


def _sample(geometry: _Geometry, q: float, method: Method, hybrid: bool) -> FieldSample:
    epsilon = geometry.chart.epsilon
    branches = _branches(geometry, q)
    flagged = [b.segment_index for b in branches if b.flagged]
    if method == Method.MOMENTUM_INTEGRAL:
        value = _hybrid(geometry, q, branches, [b.segment_index for b in branches])
        return FieldSample(q=q, value=value, branches=tuple(branches), method=Method.MOMENTUM_INTEGRAL)
    if flagged:
        if not hybrid:
            raise CausticAtQuery(
                f"The chart has a caustic over q={q!r}.", q=q, segment_index=flagged[0]
            )
        value = _hybrid(geometry, q, branches, flagged)
        return FieldSample(q=q, value=value, branches=tuple(branches), method=Method.MOMENTUM_INTEGRAL)
    value = complex(sum(b.contribution(epsilon) for b in branches))
    return FieldSample(q=q, value=value, branches=tuple(branches), method=Method.BRANCH_SUM)


def field_at(
    chart: MarkerChart,
    q: float,
    method: Method = Method.BRANCH_SUM,
    caustic_threshold: float = CAUSTIC_THRESHOLD,
) -> FieldSample:
    """
    Field value at ``q``.

    ``branch_sum`` adds ``a exp(i (S / eps - sigma pi / 2))`` over the branches.
    ``momentum_integral`` integrates over the momentum chart of every branch at ``q``.

    Raises:
        CausticAtQuery: With ``branch_sum``, if a branch is under the caustic threshold.
        UnresolvedCaustic: With ``momentum_integral``, if the momentum chart is degenerate.
    """
    return _sample(_geometry(chart, caustic_threshold), float(q), Method(method), hybrid=False)


def field_profile(
    chart: MarkerChart,
    q_grid: Sequence[float],
    epsilon: Optional[float] = None,
    caustic_threshold: float = CAUSTIC_THRESHOLD,
    threads: int = 1,
) -> List[FieldSample]:
    """
    Field over a grid, switching to the momentum integral where a caustic is crossed.

    Samples are independent and may be computed on ``threads`` workers; the order of
    ``q_grid`` is kept.

    Raises:
        UnresolvedCaustic: If a caustic has no regular momentum chart around it.
    """
    if epsilon is not None and epsilon != chart.epsilon:
        chart = chart.replace(epsilon=epsilon)
    geometry = _geometry(chart, caustic_threshold)
    points = [float(q) for q in q_grid]

    def sample(q: float) -> FieldSample:
        return _sample(geometry, q, Method.BRANCH_SUM, hybrid=True)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            samples = list(pool.map(sample, points))
    else:
        samples = [sample(q) for q in points]
    n_integral = sum(s.method == Method.MOMENTUM_INTEGRAL for s in samples)
    if n_integral:
        logger.info(f"{n_integral} of {len(samples)} profile points used the momentum integral.")
    return samples
