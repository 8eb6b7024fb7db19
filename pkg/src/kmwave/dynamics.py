"""Time stepping of marker charts along the ray flow.

Each marker ``z = (q, p)`` moves along ``X_E``, its phase gains ``p . qdot - E`` per unit
time and its weight follows ``rho_t(z) mu = const``. Maslov counters of curve charts change
when a marker tangent passes the vertical during a step.
"""

import logging
import math

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np

from .exceptions import NoConvergence, RefinementExplosion
from .manifold import (
    MarkerChart,
    check_lagrangian,
    phase_coherence_residual,
    quadrature_weights,
    quantization_data,
    refine,
    tangent_angles,
    vertical_crossings,
)
from .symbol import DispersionSymbol, FrequencyData, frequency_data

logger = logging.getLogger(__name__)

MIDPOINT_TOL = 1e-12
MIDPOINT_MAX_ITER = 100
VARIATIONAL_TOL = 1e-13
VARIATIONAL_MAX_ITER = 50
JACOBIAN_STEP = 1e-7


class Scheme(str, Enum):
    RK4 = "rk4"
    MIDPOINT = "midpoint"
    VARIATIONAL = "variational"


@dataclass(frozen=True)
class EvolveSettings:
    scheme: Scheme = Scheme.RK4
    h: float = 1e-3
    t0: float = 0.0
    t1: float = 1.0
    refine_every: int = 0
    max_spacing: float = 0.1
    caustic_threshold: float = 0.1
    max_markers: int = 100_000
    save_every: int = 1

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if not self.t1 > self.t0:
            raise ValueError(f"t1 ({self.t1}) must be greater than t0 ({self.t0}).")
        if not 0 < self.h <= self.t1 - self.t0:
            raise ValueError(f"h must be in (0, t1 - t0], got {self.h}.")

    @property
    def n_steps(self) -> int:
        return max(1, math.ceil((self.t1 - self.t0) / self.h - 1e-9))


@dataclass(frozen=True)
class Diagnostics:
    t: float
    p_phi: float
    energy: float
    coherence: float
    bs_residual: Optional[float]
    n_markers: int


@dataclass
class Trajectory:
    times: List[float] = field(default_factory=list)
    states: List[MarkerChart] = field(default_factory=list)
    diagnostics: List[Diagnostics] = field(default_factory=list)

    @property
    def final(self) -> MarkerChart:
        return self.states[-1]


def _diagnostics(chart: MarkerChart, data: FrequencyData, t: float) -> Diagnostics:
    w = quadrature_weights(chart)
    return Diagnostics(
        t=float(t),
        p_phi=float(np.sum(w * data.rho * chart.weights)),
        energy=float(-np.sum(w * data.E * data.rho * chart.weights)),
        coherence=phase_coherence_residual(chart),
        bs_residual=quantization_data(chart).bs_residual if chart.is_closed else None,
        n_markers=chart.n_markers,
    )


def vector_field(
    chart: MarkerChart, D: DispersionSymbol, t: float
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """The continuous generator ``(qdot, pdot, Sdot, mudot)`` at the markers."""
    data = frequency_data(D, chart.q, chart.p, t)
    rho_rate = data.drho_dt + np.sum(data.drho_dq * data.qdot + data.drho_dp * data.pdot, axis=1)
    mudot = -chart.weights * rho_rate / data.rho
    return data.qdot, data.pdot, data.phase_rate, mudot


def _rates(D, q, p, t, guess) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    data = frequency_data(D, q, p, t, guess)
    return data.qdot, data.pdot, data.phase_rate, data.E


def _rk4(D, q, p, t, h, guess):
    k1q, k1p, k1s, E = _rates(D, q, p, t, guess)
    k2q, k2p, k2s, _ = _rates(D, q + h / 2 * k1q, p + h / 2 * k1p, t + h / 2, E)
    k3q, k3p, k3s, _ = _rates(D, q + h / 2 * k2q, p + h / 2 * k2p, t + h / 2, E)
    k4q, k4p, k4s, _ = _rates(D, q + h * k3q, p + h * k3p, t + h, E)
    return (
        q + h / 6 * (k1q + 2 * k2q + 2 * k3q + k4q),
        p + h / 6 * (k1p + 2 * k2p + 2 * k3p + k4p),
        h / 6 * (k1s + 2 * k2s + 2 * k3s + k4s),
    )


def _midpoint(D, q, p, t, h, guess):
    qdot, pdot, _, E = _rates(D, q, p, t, guess)
    q1, p1 = q + h * qdot, p + h * pdot
    for iteration in range(MIDPOINT_MAX_ITER):
        qm, pm = (q + q1) / 2, (p + p1) / 2
        qdot, pdot, _, E = _rates(D, qm, pm, t + h / 2, E)
        q_next, p_next = q + h * qdot, p + h * pdot
        change = np.maximum(np.max(np.abs(q_next - q1), axis=1), np.max(np.abs(p_next - p1), axis=1))
        scale = np.maximum(1.0, np.maximum(np.max(np.abs(q_next), axis=1), np.max(np.abs(p_next), axis=1)))
        q1, p1 = q_next, p_next
        if np.all(change <= MIDPOINT_TOL * scale):
            logger.debug(f"Implicit midpoint converged in {iteration + 1} iterations.")
            qm, pm = (q + q1) / 2, (p + p1) / 2
            E_mid = frequency_data(D, qm, pm, t + h / 2, E).E
            return q1, p1, np.sum(pm * (q1 - q), axis=1) - h * E_mid
    index = int(np.argmax(change / scale))
    raise NoConvergence(
        f"Implicit midpoint did not converge at marker {index}.",
        index=index,
        residual=float(change[index]),
    )


def _variational_residual(D, q0, p0, s0, x, t, h, n):
    q1, p1, s1 = x[:, :n], x[:, n : 2 * n], x[:, 2 * n]
    qm, pm = (q0 + q1) / 2, (p0 + p1) / 2
    dq, dp = q1 - q0, p1 - p0
    K = (s1 - s0) / h - np.sum(pm * dq, axis=1) / h
    tau = t + h / 2
    dU = D.dU(qm, pm, tau, K)
    return np.concatenate(
        (
            h * D.dp(qm, pm, tau, K) - dU[:, None] * dq,
            h * D.dq(qm, pm, tau, K) + dU[:, None] * dp,
            D.eval(qm, pm, tau, K)[:, None],
        ),
        axis=1,
    )


def _variational(D, q, p, t, h, guess):
    n = q.shape[1]
    s0 = np.zeros(q.shape[0])
    q1, p1, s1 = _rk4(D, q, p, t, h, guess)
    x = np.column_stack((q1, p1, s1))
    m = x.shape[1]
    for iteration in range(VARIATIONAL_MAX_ITER):
        residual = _variational_residual(D, q, p, s0, x, t, h, n)
        jacobian = np.empty((x.shape[0], m, m))
        for j in range(m):
            step = JACOBIAN_STEP * np.maximum(1.0, np.abs(x[:, j]))
            shift = np.zeros_like(x)
            shift[:, j] = step
            forward = _variational_residual(D, q, p, s0, x + shift, t, h, n)
            backward = _variational_residual(D, q, p, s0, x - shift, t, h, n)
            jacobian[:, :, j] = (forward - backward) / (2 * step[:, None])
        try:
            update = np.linalg.solve(jacobian, -residual[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError as error:
            raise NoConvergence(
                "Variational step has a singular Newton matrix.",
                residual=float(np.max(np.abs(residual))),
            ) from error
        x = x + update
        if np.all(np.abs(update) <= VARIATIONAL_TOL * np.maximum(1.0, np.abs(x))):
            logger.debug(f"Variational Newton converged in {iteration + 1} iterations.")
            return x[:, :n], x[:, n : 2 * n], x[:, 2 * n]
    worst = np.max(np.abs(_variational_residual(D, q, p, s0, x, t, h, n)), axis=1)
    index = int(np.argmax(worst))
    raise NoConvergence(
        f"Variational Newton did not converge at marker {index}.",
        index=index,
        residual=float(worst[index]),
    )


_SCHEMES = {Scheme.RK4: _rk4, Scheme.MIDPOINT: _midpoint, Scheme.VARIATIONAL: _variational}


def _advance(
    chart: MarkerChart,
    D: DispersionSymbol,
    t: float,
    h: float,
    scheme: Scheme,
    guess: Optional[np.ndarray] = None,
) -> Tuple[MarkerChart, FrequencyData]:
    before = frequency_data(D, chart.q, chart.p, t, guess)
    q1, p1, phase_gain = _SCHEMES[Scheme(scheme)](D, chart.q, chart.p, t, h, before.E)
    after = frequency_data(D, q1, p1, t + h, before.E)
    weights = before.rho * chart.weights / after.rho

    moved = chart.replace(q=q1, p=p1, phases=chart.phases + phase_gain, weights=weights)
    if not chart.is_grid:
        crossings = vertical_crossings(tangent_angles(chart), tangent_angles(moved))
        if np.any(crossings):
            logger.info(f"{int(np.count_nonzero(crossings))} markers crossed a caustic at t={t + h!r}.")
        moved = moved.replace(maslov=chart.maslov + crossings)
    return moved, after


def step(
    chart: MarkerChart, D: DispersionSymbol, t: float, h: float, scheme: Scheme = Scheme.RK4
) -> MarkerChart:
    """
    Advance every marker, phase, weight and Maslov counter from ``t`` to ``t + h``.

    Raises:
        NoConvergence, DegenerateSymbol: With the offending marker index.
    """
    return _advance(chart, D, t, h, scheme)[0]


def step_variational(chart: MarkerChart, D: DispersionSymbol, t: float, h: float) -> MarkerChart:
    """Critical point of the midpoint discrete action, solved marker by marker with Newton."""
    return step(chart, D, t, h, Scheme.VARIATIONAL)


def evolve(chart: MarkerChart, D: DispersionSymbol, settings: EvolveSettings) -> Trajectory:
    """
    Repeated steps from ``settings.t0`` to exactly ``settings.t1``.

    The last step is shortened to land on ``t1``. Curve charts are refined every
    ``refine_every`` steps. States are kept every ``save_every`` steps and at the end.

    Raises:
        ChartError: If a grid chart is not Lagrangian.
        RefinementExplosion: If refinement produces more than ``max_markers`` markers.
    """
    check_lagrangian(chart)
    n_steps = settings.n_steps
    trajectory = Trajectory()
    data = frequency_data(D, chart.q, chart.p, settings.t0)
    trajectory.times.append(settings.t0)
    trajectory.states.append(chart)
    trajectory.diagnostics.append(_diagnostics(chart, data, settings.t0))

    t = settings.t0
    guess: Optional[np.ndarray] = data.E
    for k in range(n_steps):
        t_next = settings.t1 if k == n_steps - 1 else settings.t0 + (k + 1) * settings.h
        chart, data = _advance(chart, D, t, t_next - t, settings.scheme, guess)
        guess = data.E
        t = t_next

        if settings.refine_every and (k + 1) % settings.refine_every == 0 and not chart.is_grid:
            refined = refine(chart, settings.max_spacing)
            if refined is not chart:
                chart = refined
                data = frequency_data(D, chart.q, chart.p, t)
                guess = data.E
            if chart.n_markers > settings.max_markers:
                raise RefinementExplosion(
                    f"Refinement produced {chart.n_markers} markers.",
                    n_markers=chart.n_markers,
                    max_markers=settings.max_markers,
                    t=t,
                )
            if chart.n_markers > 0.8 * settings.max_markers:
                logger.warning(
                    f"{chart.n_markers} markers at t={t!r}, cap is {settings.max_markers}."
                )

        trajectory.diagnostics.append(_diagnostics(chart, data, t))
        if (k + 1) % settings.save_every == 0 or k == n_steps - 1:
            trajectory.times.append(t)
            trajectory.states.append(chart)
    return trajectory
