"""Named numerical checks of the conservation laws and of the Hamiltonian structure.

Each property maps a :class:`VerifyContext` and a random generator to a :class:`Check`. The
``verify`` command runs the selected properties and writes the results as JSON.
"""

import logging

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import sympy

from .dynamics import EvolveSettings, Scheme, Trajectory, evolve, step
from .functions import PhaseSpaceFunction, phase_space_symbols
from .manifold import (
    GaugeMap,
    MarkerChart,
    gauge_transform,
    lagrangian_defect,
    quadrature_weights,
    quantization_data,
    total_weight,
    weight_integrability,
)
from .reconstruct import field_profile
from .structure import (
    FunctionalDerivative,
    TangentPerturbation,
    dtheta_eval,
    energy_derivative,
    frozen_in_check,
    gauge_direction,
    hamiltonian_vector,
    observables,
    pairing_eval,
    poisson_bracket,
    theta_eval,
)
from .symbol import DispersionSymbol, derivative_defect, dispersion_residual, frequency_data, SELF_CHECK_TOL

logger = logging.getLogger(__name__)

GAUGE_STEPS = 10


@dataclass(frozen=True)
class Check:
    defect: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.defect <= self.tolerance)


@dataclass(frozen=True)
class PropertyResult:
    name: str
    seed: Optional[int]
    defect: float
    tolerance: float
    passed: bool


@dataclass
class VerifyContext:
    """Inputs shared by the properties of one verification run.

    Attributes:
        symbol: Dispersion symbol of the run.
        chart: Initial chart.
        settings: Evolution settings.
        constraint: A function vanishing on the initial chart, when one is known.
        frozen_in_span: Length of the interval the frozen-in check transports over. The whole
            run interval when None.
    """

    symbol: DispersionSymbol
    chart: MarkerChart
    settings: EvolveSettings
    constraint: Optional[PhaseSpaceFunction] = None
    threads: int = 1
    frozen_in_span: Optional[float] = None

    @cached_property
    def trajectory(self) -> Trajectory:
        logger.info("Evolving the chart for the conservation checks.")
        return evolve(self.chart, self.symbol, self.settings)

    @property
    def t0(self) -> float:
        return self.settings.t0

    @cached_property
    def autonomous(self) -> bool:
        data = frequency_data(self.symbol, self.chart.q, self.chart.p, self.t0)
        samples = [self.t0, (self.t0 + self.settings.t1) / 2, self.settings.t1]
        return all(
            np.all(self.symbol.dt(self.chart.q, self.chart.p, t, -data.E) == 0) for t in samples
        )


PropertyFn = Callable[[VerifyContext, np.random.Generator], Check]


@dataclass(frozen=True)
class Property:
    name: str
    fn: PropertyFn
    randomized: bool = False
    applies: Callable[[VerifyContext], bool] = field(default=lambda ctx: True)


PROPERTIES: Dict[str, Property] = {}


def register(name: str, randomized: bool = False, applies: Optional[Callable[[VerifyContext], bool]] = None):
    def decorator(fn: PropertyFn) -> PropertyFn:
        PROPERTIES[name] = Property(name, fn, randomized, applies or (lambda ctx: True))
        return fn

    return decorator


def _curve(ctx: VerifyContext) -> bool:
    return not ctx.chart.is_grid


def random_generator(rng: np.random.Generator, dim: int, degree: int = 2) -> PhaseSpaceFunction:
    """Polynomial in ``q, p`` of the given degree with normal coefficients."""
    q_names, p_names = phase_space_symbols(dim)
    variables = sympy.symbols(q_names + p_names, real=True)
    monomials = sorted(sympy.itermonomials(variables, degree), key=sympy.default_sort_key)
    expr = sum(float(c) * m for c, m in zip(rng.normal(size=len(monomials)), monomials))
    return PhaseSpaceFunction.from_expression(sympy.sympify(expr), dim)


def random_density(rng: np.random.Generator, chart: MarkerChart) -> np.ndarray:
    """Smooth density perturbation: the weights times a random trigonometric polynomial."""
    x = chart.labels
    span = chart.period if chart.period is not None else max(x[-1] - x[0], 1.0)
    phase = 2 * np.pi * (x - x[0]) / span
    c = rng.normal(size=3)
    return chart.weights * (c[0] + c[1] * np.cos(phase) + c[2] * np.sin(phase))


def random_tangent(rng: np.random.Generator, chart: MarkerChart) -> TangentPerturbation:
    return TangentPerturbation(
        dg=random_generator(rng, chart.dim),
        dmu=random_density(rng, chart),
        dphi=float(rng.normal()),
    )


def random_functional(rng: np.random.Generator, chart: MarkerChart) -> FunctionalDerivative:
    """A covector whose generator component integrates to zero."""
    w = quadrature_weights(chart)
    A = rng.normal(size=chart.n_markers) * chart.weights
    A = A - np.sum(w * A) / np.sum(w)
    return FunctionalDerivative(dF_dg=A, dF_dmu=random_generator(rng, chart.dim))


def random_gauge(rng: np.random.Generator, chart: MarkerChart) -> GaugeMap:
    """A cyclic shift (circles) followed by a smooth monotone relabelling."""
    x = chart.labels
    if chart.is_closed:
        assert chart.period is not None
        period = chart.period
        amplitude = float(rng.uniform(0.05, 0.25)) * period / (2 * np.pi)
        return GaugeMap(
            shift=int(rng.integers(1, chart.n_markers)),
            relabel=lambda y: y + amplitude * np.sin(2 * np.pi * (y - y[0]) / period),
        )
    a, b = float(x[0]), float(x[-1])
    amplitude = float(rng.uniform(0.05, 0.25)) * (b - a) / np.pi
    return GaugeMap(relabel=lambda y: y + amplitude * np.sin(np.pi * (y - a) / (b - a)))


def _relative(value: float, scale: float) -> float:
    return float(abs(value) / max(1.0, abs(scale)))


@register("frequency_residual")
def _frequency_residual(ctx, rng) -> Check:
    weight_integrability(ctx.chart)
    return Check(dispersion_residual(ctx.symbol, ctx.chart, ctx.t0), 1e-10)


@register("symbol_derivatives")
def _symbol_derivatives(ctx, rng) -> Check:
    return Check(derivative_defect(ctx.symbol), SELF_CHECK_TOL)


@register("p_phi_conservation")
def _p_phi_conservation(ctx, rng) -> Check:
    values = np.array([d.p_phi for d in ctx.trajectory.diagnostics])
    return Check(_relative(float(np.max(np.abs(values - values[0]))), values[0]), 1e-10)


@register("energy_conservation", applies=lambda ctx: ctx.autonomous)
def _energy_conservation(ctx, rng) -> Check:
    values = np.array([d.energy for d in ctx.trajectory.diagnostics])
    return Check(_relative(float(np.max(np.abs(values - values[0]))), values[0]), 1e-6)


@register("coherence")
def _coherence(ctx, rng) -> Check:
    values = [d.coherence for d in ctx.trajectory.diagnostics]
    return Check(float(max(values)), max(10 * values[0], 1e-10))


@register("theta_constant_direction", randomized=True)
def _theta_constant_direction(ctx, rng) -> Check:
    v = TangentPerturbation(
        dg=PhaseSpaceFunction.constant(float(rng.normal())), dmu=np.zeros(ctx.chart.n_markers), dphi=0.0
    )
    return Check(abs(theta_eval(ctx.chart, ctx.symbol, ctx.t0, v)), 0.0)


@register("dtheta_antisymmetry", randomized=True)
def _dtheta_antisymmetry(ctx, rng) -> Check:
    v1, v2 = random_tangent(rng, ctx.chart), random_tangent(rng, ctx.chart)
    forward = dtheta_eval(ctx.chart, ctx.symbol, ctx.t0, v1, v2)
    backward = dtheta_eval(ctx.chart, ctx.symbol, ctx.t0, v2, v1)
    return Check(abs(forward + backward), 0.0)


@register("gauge_kernel", randomized=True, applies=lambda ctx: _curve(ctx) and ctx.constraint is not None)
def _gauge_kernel(ctx, rng) -> Check:
    assert ctx.constraint is not None
    gauge = gauge_direction(ctx.chart, ctx.constraint * random_generator(rng, ctx.chart.dim, degree=1))
    v = random_tangent(rng, ctx.chart)
    return Check(abs(dtheta_eval(ctx.chart, ctx.symbol, ctx.t0, v, gauge)), 1e-6)


@register("consistency_triangle", randomized=True)
def _consistency_triangle(ctx, rng) -> Check:
    chart, D, t = ctx.chart, ctx.symbol, ctx.t0
    dF, dG = random_functional(rng, chart), random_functional(rng, chart)
    w = random_tangent(rng, chart)
    X_F = hamiltonian_vector(chart, D, t, dF)
    X_G = hamiltonian_vector(chart, D, t, dG)
    bracket = poisson_bracket(chart, D, t, dF, dG)
    gaps = [
        bracket + pairing_eval(chart, dG, X_F),
        bracket - pairing_eval(chart, dF, X_G),
        pairing_eval(chart, dF, w) + dtheta_eval(chart, D, t, X_F, w),
    ]
    return Check(max(_relative(g, bracket) for g in gaps), 1e-8)


@register("energy_generates_flow")
def _energy_generates_flow(ctx, rng) -> Check:
    chart, D, t = ctx.chart, ctx.symbol, ctx.t0
    X = hamiltonian_vector(chart, D, t, energy_derivative(chart, D, t), time_dependent=True)
    data = frequency_data(D, chart.q, chart.p, t)
    rho_rate = data.drho_dt + np.sum(data.drho_dq * data.qdot + data.drho_dp * data.pdot, axis=1)
    mudot = -chart.weights * rho_rate / data.rho
    scale = max(1.0, float(np.max(np.abs(data.E))))
    defect = max(
        float(np.max(np.abs(X.dg(chart.q, chart.p) - data.E))) / scale,
        float(np.max(np.abs(X.dmu - mudot))) / max(1.0, float(np.max(np.abs(mudot)))),
        _relative(X.dphi - data.phase_rate[chart.base_index], data.phase_rate[chart.base_index]),
    )
    return Check(defect, 1e-8)


@register("frozen_in", randomized=True)
def _frozen_in(ctx, rng) -> Check:
    t1 = ctx.settings.t1
    if ctx.frozen_in_span is not None:
        t1 = min(t1, ctx.t0 + ctx.frozen_in_span)
    h = min(ctx.settings.h, t1 - ctx.t0)
    v = random_tangent(rng, ctx.chart)
    result = frozen_in_check(ctx.chart, ctx.symbol, v, ctx.t0, t1, h, scheme=ctx.settings.scheme)
    return Check(_relative(result.defect, result.theta_t0), 1e-4)


def _chart_gap(a: MarkerChart, b: MarkerChart) -> float:
    return float(
        max(
            np.max(np.abs(a.q - b.q)),
            np.max(np.abs(a.p - b.p)),
            np.max(np.abs(a.weights - b.weights)),
            np.max(np.abs(a.phases - b.phases)),
            np.max(np.abs(a.maslov - b.maslov)),
        )
    )


@register("gauge_invariance", randomized=True, applies=_curve)
def _gauge_invariance(ctx, rng) -> Check:
    chart, D, t = ctx.chart, ctx.symbol, ctx.t0
    g = random_gauge(rng, chart)
    moved = gauge_transform(chart, g)

    gaps = [total_weight(moved) - total_weight(chart)]
    before, after = observables(chart, D, t), observables(moved, D, t)
    gaps += [before.p_phi - after.p_phi, before.energy - after.energy]

    fields_agree = True
    if chart.is_closed:
        data, moved_data = quantization_data(chart), quantization_data(moved)
        gaps += [data.loop_action - moved_data.loop_action, data.bs_residual - moved_data.bs_residual]
        fields_agree = data.bs_residual <= 1e-8
    if fields_agree:
        q = chart.q[:, 0]
        centre, half = (q.max() + q.min()) / 2, (q.max() - q.min()) / 2
        q_grid = centre + half * np.linspace(-0.5, 0.5, 11)
        values = [s.value for s in field_profile(chart, q_grid, threads=ctx.threads)]
        moved_values = [s.value for s in field_profile(moved, q_grid, threads=ctx.threads)]
        gaps += [abs(a - b) for a, b in zip(values, moved_values)]

    # the loop phase picked up by a cyclic shift is only conserved to discretization error
    relabel = GaugeMap(relabel=g.relabel)
    h = min(ctx.settings.h, ctx.settings.t1 - t)
    evolved, moved_evolved = chart, gauge_transform(chart, relabel)
    for k in range(GAUGE_STEPS):
        evolved = step(evolved, D, t + k * h, h, ctx.settings.scheme)
        moved_evolved = step(moved_evolved, D, t + k * h, h, ctx.settings.scheme)
    gaps.append(_chart_gap(gauge_transform(evolved, relabel), moved_evolved))
    return Check(float(max(abs(gap) for gap in gaps)), 1e-8)


@register("variational_midpoint")
def _variational_midpoint(ctx, rng) -> Check:
    h = min(ctx.settings.h, ctx.settings.t1 - ctx.t0)
    midpoint = step(ctx.chart, ctx.symbol, ctx.t0, h, Scheme.MIDPOINT)
    variational = step(ctx.chart, ctx.symbol, ctx.t0, h, Scheme.VARIATIONAL)
    return Check(_chart_gap(midpoint, variational), 1e-10)


@register("lagrangian", applies=lambda ctx: ctx.chart.is_grid)
def _lagrangian(ctx, rng) -> Check:
    return Check(lagrangian_defect(ctx.chart), 1e-8)


def select(ctx: VerifyContext, names: Sequence[str]) -> List[Property]:
    """Properties named in ``names``; ``all`` expands to every property applying to the context."""
    if "all" in names:
        return [prop for prop in PROPERTIES.values() if prop.applies(ctx)]
    selected = []
    for name in names:
        prop = PROPERTIES[name]
        if not prop.applies(ctx):
            logger.warning(f"Property '{name}' does not apply to this run and is skipped.")
            continue
        selected.append(prop)
    return selected


def run_verification(ctx: VerifyContext, names: Sequence[str], seeds: Sequence[int]) -> List[PropertyResult]:
    """Run the selected properties, once per seed for the randomized ones."""
    results = []
    for prop in select(ctx, names):
        for seed in seeds if prop.randomized else [None]:
            rng = np.random.default_rng(seed)
            check = prop.fn(ctx, rng)
            logger.info(f"{prop.name} (seed {seed}): defect {check.defect!r}, tolerance {check.tolerance!r}.")
            results.append(
                PropertyResult(
                    name=prop.name,
                    seed=seed,
                    defect=float(check.defect),
                    tolerance=float(check.tolerance),
                    passed=check.passed,
                )
            )
    return results
