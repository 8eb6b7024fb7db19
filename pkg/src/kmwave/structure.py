"""Hamiltonian structure of the wave dynamics evaluated on marker charts.

Tangent vectors are ``(dg, dmu, dphi)``: a phase-space generator ``dg`` moving the markers
along ``X_dg``, per-marker density components ``dmu`` and a base phase change ``dphi``.
Covectors are ``(dF_dg, dF_dmu)``: per-marker density components and a phase-space function.
Integrals over the chart are trapezoid sums in the label coordinate.
"""

import logging

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dynamics import EvolveSettings, Scheme, evolve
from .exceptions import ChartError, ZeroWeight
from .functions import PhaseSpaceFunction, gradient_defect
from .manifold import MarkerChart, Topology, quadrature_weights
from .symbol import DispersionSymbol, FrequencyData, frequency_data, weight_function

logger = logging.getLogger(__name__)

FD_AMPLITUDE = 1e-5
GAUGE_TOL = 1e-10


@dataclass(frozen=True)
class TangentPerturbation:
    dg: PhaseSpaceFunction
    dmu: np.ndarray
    dphi: float = 0.0


@dataclass(frozen=True)
class FunctionalDerivative:
    dF_dg: np.ndarray
    dF_dmu: PhaseSpaceFunction


@dataclass(frozen=True)
class Observables:
    p_phi: float
    energy: float


@dataclass(frozen=True)
class FrozenInResult:
    theta_t0: float
    theta_t1: float
    defect: float


def _bracket(aq, ap, bq, bp) -> np.ndarray:
    return np.sum(aq * bp - ap * bq, axis=1)


def _check_length(chart: MarkerChart, values: np.ndarray, what: str) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape != (chart.n_markers,):
        raise ChartError(f"'{what}' has shape {values.shape}, expected ({chart.n_markers},).")
    return values


def _rho(chart: MarkerChart, D: DispersionSymbol, t: float) -> FrequencyData:
    data = frequency_data(D, chart.q, chart.p, t)
    if np.any(data.rho == 0):
        index = int(np.flatnonzero(data.rho == 0)[0])
        raise ZeroWeight(f"rho vanishes at marker {index}.", index=index)
    return data


def tangent(dg: PhaseSpaceFunction, dmu: Optional[np.ndarray] = None, dphi: float = 0.0, n_markers: int = 0) -> TangentPerturbation:
    """Shorthand for a tangent with a zero density part when ``dmu`` is omitted."""
    return TangentPerturbation(dg, np.zeros(n_markers) if dmu is None else np.asarray(dmu, dtype=float), float(dphi))


def tangent_defect(chart: MarkerChart, v: TangentPerturbation) -> float:
    """Relative gap between the analytic and finite-difference gradients of ``v.dg`` on the chart."""
    return gradient_defect(v.dg, chart.q, chart.p)


def observables(chart: MarkerChart, D: DispersionSymbol, t: float) -> Observables:
    """Wave action ``sum rho mu`` and energy ``-sum E rho mu``."""
    data = frequency_data(D, chart.q, chart.p, t)
    w = quadrature_weights(chart)
    return Observables(
        p_phi=float(np.sum(w * data.rho * chart.weights)),
        energy=float(-np.sum(w * data.E * data.rho * chart.weights)),
    )


def total_wave_action(chart: MarkerChart, D: DispersionSymbol, t: float) -> float:
    return observables(chart, D, t).p_phi


def theta_eval(chart: MarkerChart, D: DispersionSymbol, t: float, v: TangentPerturbation) -> float:
    """The one-form on a tangent. Generators are taken relative to the base marker."""
    data = frequency_data(D, chart.q, chart.p, t)
    w = quadrature_weights(chart)
    b = chart.base_index
    g, _, g_p = v.dg.jet(chart.q, chart.p)
    p_phi = np.sum(w * data.rho * chart.weights)
    bulk = -np.sum(w * (g - g[b]) * data.rho * chart.weights)
    return float(bulk - p_phi * (np.dot(chart.p[b], g_p[b]) - v.dphi))


def _dtheta_half(chart, data, w, v1: TangentPerturbation, v2: TangentPerturbation) -> float:
    q, p, mu = chart.q, chart.p, chart.weights
    b = chart.base_index
    g1, g1q, g1p = v1.dg.jet(q, p)
    g2, g2q, g2p = v2.dg.jet(q, p)
    m1 = _check_length(chart, v1.dmu, "dmu")
    m2 = _check_length(chart, v2.dmu, "dmu")
    rho = data.rho
    rho_g1 = _bracket(data.drho_dq, data.drho_dp, g1q, g1p)
    rho_g2 = _bracket(data.drho_dq, data.drho_dp, g2q, g2p)
    integrand = rho * _bracket(g1q, g1p, g2q, g2p) + g1 * rho_g2 - g2 * rho_g1
    bulk = np.sum(w * integrand * mu) - np.sum(w * g2 * rho * m1) + np.sum(w * g1 * rho * m2)
    action_rate_1 = np.sum(w * rho_g1 * mu) + np.sum(w * rho * m1)
    phase_rate_2 = np.dot(p[b], g2p[b]) - g2[b]
    return float(bulk / 2 - action_rate_1 * (phase_rate_2 - v2.dphi))


def dtheta_eval(
    chart: MarkerChart,
    D: DispersionSymbol,
    t: float,
    v1: TangentPerturbation,
    v2: TangentPerturbation,
) -> float:
    """The presymplectic form on two tangents, antisymmetric to the last bit."""
    data = frequency_data(D, chart.q, chart.p, t)
    w = quadrature_weights(chart)
    return _dtheta_half(chart, data, w, v1, v2) - _dtheta_half(chart, data, w, v2, v1)


def pairing_eval(chart: MarkerChart, alpha: FunctionalDerivative, v: TangentPerturbation) -> float:
    """``sum dg dF_dg + sum {dF_dmu, dg} mu + sum dF_dmu dmu``."""
    w = quadrature_weights(chart)
    A = _check_length(chart, alpha.dF_dg, "dF_dg")
    m = _check_length(chart, v.dmu, "dmu")
    g, gq, gp = v.dg.jet(chart.q, chart.p)
    B, Bq, Bp = alpha.dF_dmu.jet(chart.q, chart.p)
    return float(
        np.sum(w * g * A) + np.sum(w * _bracket(Bq, Bp, gq, gp) * chart.weights) + np.sum(w * B * m)
    )


def _bracket_half(chart, data, w, dF: FunctionalDerivative, dG: FunctionalDerivative) -> float:
    rho_fn = PhaseSpaceFunction(lambda q, p: (data.rho, data.drho_dq, data.drho_dp), "rho")
    A_F = _check_length(chart, dF.dF_dg, "dF_dg")
    A_G = _check_length(chart, dG.dF_dg, "dF_dg")
    B_F, B_G = dF.dF_dmu(chart.q, chart.p), dG.dF_dmu(chart.q, chart.p)
    beta_F = (dF.dF_dmu / rho_fn).gradient(chart.q, chart.p)
    beta_G = (dG.dF_dmu / rho_fn).gradient(chart.q, chart.p)
    mixed = np.sum(w * B_F * A_G / data.rho)
    transport = np.sum(w * data.rho * _bracket(*beta_F, *beta_G) * chart.weights)
    return float(mixed - transport / 2)


def poisson_bracket(
    chart: MarkerChart,
    D: DispersionSymbol,
    t: float,
    dF: FunctionalDerivative,
    dG: FunctionalDerivative,
) -> float:
    """
    The bracket of two functionals from their derivatives.

    Raises:
        ZeroWeight: If rho vanishes at a marker.
    """
    data = _rho(chart, D, t)
    w = quadrature_weights(chart)
    return _bracket_half(chart, data, w, dF, dG) - _bracket_half(chart, data, w, dG, dF)


def hamiltonian_vector(
    chart: MarkerChart,
    D: DispersionSymbol,
    t: float,
    dF: FunctionalDerivative,
    time_dependent: bool = False,
) -> TangentPerturbation:
    """
    Tangent ``X_F`` with ``dg = -dF_dmu / rho`` and ``dmu = (dF_dg + {rho, dF_dmu / rho} mu) / rho``.

    With ``time_dependent`` the source ``-rhodot mu`` is added to ``dF_dg``. The phase part is
    the phase rate of ``dg`` at the base marker.

    Raises:
        ZeroWeight: If rho vanishes at a marker.
    """
    data = _rho(chart, D, t)
    rho_fn = weight_function(D, t)
    rho_here = PhaseSpaceFunction(lambda q, p: (data.rho, data.drho_dq, data.drho_dp), "rho")
    A = _check_length(chart, dF.dF_dg, "dF_dg")
    if time_dependent:
        A = A - data.drho_dt * chart.weights
    _, beta_q, beta_p = (dF.dF_dmu / rho_here).jet(chart.q, chart.p)
    transport = _bracket(data.drho_dq, data.drho_dp, beta_q, beta_p)
    dg = -(dF.dF_dmu / rho_fn)
    b = chart.base_index
    dphi = float(dg.phase_rate(chart.q[b : b + 1], chart.p[b : b + 1])[0])
    return TangentPerturbation(dg=dg, dmu=(A + transport * chart.weights) / data.rho, dphi=dphi)


def _energy_density(D: DispersionSymbol, t: float) -> PhaseSpaceFunction:
    def jet(q, p):
        data = frequency_data(D, q, p, t)
        return (
            -data.E * data.rho,
            -(data.dE_dq * data.rho[:, None] + data.E[:, None] * data.drho_dq),
            -(data.dE_dp * data.rho[:, None] + data.E[:, None] * data.drho_dp),
        )

    return PhaseSpaceFunction(jet, f"-E rho[{D.label}]")


def energy_derivative(chart: MarkerChart, D: DispersionSymbol, t: float) -> FunctionalDerivative:
    """Derivative of the energy: nothing in the generator slot, ``-E rho`` in the density slot."""
    return FunctionalDerivative(dF_dg=np.zeros(chart.n_markers), dF_dmu=_energy_density(D, t))


def p_phi_derivative(chart: MarkerChart, D: DispersionSymbol, t: float) -> FunctionalDerivative:
    """Derivative of the wave action: ``rho`` in the density slot."""
    return FunctionalDerivative(dF_dg=np.zeros(chart.n_markers), dF_dmu=weight_function(D, t))


def label_derivative(chart: MarkerChart, values: np.ndarray) -> np.ndarray:
    """Derivative along the labels: spectral on uniform circles, second order otherwise."""
    x = chart.labels
    values = np.asarray(values, dtype=float)
    if chart.topology == Topology.CIRCLE:
        assert chart.period is not None
        n = chart.n_markers
        spacing = np.append(np.diff(x), x[0] + chart.period - x[-1])
        if np.allclose(spacing, chart.period / n, rtol=1e-12, atol=0.0):
            k = 2j * np.pi * np.fft.fftfreq(n, d=chart.period / n)
            if n % 2 == 0:
                k[n // 2] = 0.0
            return np.real(np.fft.ifft(k * np.fft.fft(values)))
        after, before = np.roll(values, -1), np.roll(values, 1)
        h_plus = spacing
        h_minus = np.roll(spacing, 1)
        return (
            h_minus**2 * after - h_plus**2 * before + (h_plus**2 - h_minus**2) * values
        ) / (h_plus * h_minus * (h_plus + h_minus))
    return np.gradient(values, x, edge_order=2)


def gauge_direction(chart: MarkerChart, f: PhaseSpaceFunction) -> TangentPerturbation:
    """
    Infinitesimal relabelling generated by ``f`` vanishing on the chart.

    ``X_f`` is tangent to the curve, ``X_f = xi dz/dx``; the density moves by ``d(xi mu)/dx``
    and the base phase by the phase rate of ``f``.

    Raises:
        ChartError: For grid charts, or when ``f`` does not vanish at the markers.
    """
    if chart.is_grid:
        raise ChartError("'gauge_direction' needs a curve chart, got a grid chart.")
    values = f(chart.q, chart.p)
    if np.max(np.abs(values)) > GAUGE_TOL:
        raise ChartError(
            "A gauge generator must vanish on the chart.", max_value=float(np.max(np.abs(values)))
        )
    vq, vp = f.hamiltonian_vector(chart.q, chart.p)
    tq = label_derivative(chart, chart.q[:, 0])
    tp = label_derivative(chart, chart.p[:, 0])
    xi = (vq[:, 0] * tq + vp[:, 0] * tp) / (tq**2 + tp**2)
    b = chart.base_index
    dphi = float(f.phase_rate(chart.q[b : b + 1], chart.p[b : b + 1])[0])
    return TangentPerturbation(dg=f, dmu=label_derivative(chart, xi * chart.weights), dphi=dphi)


def perturb(chart: MarkerChart, v: TangentPerturbation, s: float) -> MarkerChart:
    """Chart moved by ``s`` along ``v``, phases carried as a section."""
    vq, vp = v.dg.hamiltonian_vector(chart.q, chart.p)
    rate = v.dg.phase_rate(chart.q, chart.p)
    b = chart.base_index
    return chart.replace(
        q=chart.q + s * vq,
        p=chart.p + s * vp,
        weights=chart.weights + s * _check_length(chart, v.dmu, "dmu"),
        phases=chart.phases + s * (v.dphi + rate - rate[b]),
    )


def _transported_theta(
    reference: MarkerChart, plus: MarkerChart, minus: MarkerChart, D: DispersionSymbol, t: float, s: float
) -> float:
    data = frequency_data(D, reference.q, reference.p, t)
    w = quadrature_weights(reference)
    b = reference.base_index
    dq = (plus.q - minus.q) / (2 * s)
    dS = (plus.phases - minus.phases) / (2 * s)
    p_dq = np.sum(reference.p * dq, axis=1)
    relative = p_dq - p_dq[b] - (dS - dS[b])
    p_phi = np.sum(w * data.rho * reference.weights)
    return float(-np.sum(w * relative * data.rho * reference.weights) - p_phi * (p_dq[b] - dS[b]))


def frozen_in_check(
    chart: MarkerChart,
    D: DispersionSymbol,
    v: TangentPerturbation,
    t0: float,
    t1: float,
    h: float,
    s: float = FD_AMPLITUDE,
    scheme: Scheme = Scheme.RK4,
) -> FrozenInResult:
    """
    Compare the one-form on ``v`` at ``t0`` with the one-form on the transported tangent at ``t1``.

    The tangent is transported by central differences of the flow at amplitudes ``s`` and
    ``s / 2``, combined by Richardson extrapolation.
    """
    settings = EvolveSettings(scheme=scheme, h=h, t0=t0, t1=t1, save_every=10**9)
    reference = evolve(chart, D, settings).final

    def transported(amplitude: float) -> float:
        plus = evolve(perturb(chart, v, amplitude), D, settings).final
        minus = evolve(perturb(chart, v, -amplitude), D, settings).final
        return _transported_theta(reference, plus, minus, D, t1, amplitude)

    coarse, fine = transported(s), transported(s / 2)
    theta_t1 = (4 * fine - coarse) / 3
    theta_t0 = theta_eval(chart, D, t0, v)
    logger.debug(f"Frozen-in: coarse {coarse!r}, fine {fine!r}, start {theta_t0!r}.")
    return FrozenInResult(theta_t0=theta_t0, theta_t1=theta_t1, defect=abs(theta_t1 - theta_t0))
