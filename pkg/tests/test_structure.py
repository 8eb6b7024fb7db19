import numpy as np
import pytest

from kmwave.dynamics import vector_field
from kmwave.exceptions import ChartError
from kmwave.functions import PhaseSpaceFunction
from kmwave.manifold import circle_chart, init_from_phase_function, quadrature_weights
from kmwave.structure import (
    TangentPerturbation,
    dtheta_eval,
    energy_derivative,
    frozen_in_check,
    gauge_direction,
    hamiltonian_vector,
    label_derivative,
    observables,
    p_phi_derivative,
    pairing_eval,
    perturb,
    poisson_bracket,
    tangent,
    tangent_defect,
    theta_eval,
    total_wave_action,
)
from kmwave.symbol import frequency_data, make_symbol
from kmwave.verification import random_functional, random_generator, random_tangent

CONSTRAINT = PhaseSpaceFunction.from_expression("q^2 + p^2 - 1")


def test_observables_on_the_unit_circle(harmonic, circle):
    values = observables(circle, harmonic, 0.0)
    assert values.p_phi == pytest.approx(-1.0, abs=1e-12)
    assert values.energy == pytest.approx(0.5, abs=1e-12)
    assert total_wave_action(circle, harmonic, 0.0) == values.p_phi


@pytest.mark.parametrize("value", [-2.0, 0.5, 3.0])
def test_theta_vanishes_on_constant_generators(harmonic, circle, value):
    v = tangent(PhaseSpaceFunction.constant(value), n_markers=circle.n_markers)
    assert theta_eval(circle, harmonic, 0.0, v) == 0


def test_theta_on_a_base_phase_change(harmonic, circle):
    v = tangent(PhaseSpaceFunction.from_expression("p"), dphi=0.3, n_markers=circle.n_markers)
    assert theta_eval(circle, harmonic, 0.0, v) == pytest.approx(-0.3, abs=1e-12)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_dtheta_is_antisymmetric(free, small_gaussian_chart, seed):
    rng = np.random.default_rng(seed)
    v1, v2 = random_tangent(rng, small_gaussian_chart), random_tangent(rng, small_gaussian_chart)
    forward = dtheta_eval(small_gaussian_chart, free, 0.0, v1, v2)
    backward = dtheta_eval(small_gaussian_chart, free, 0.0, v2, v1)
    assert forward + backward == 0
    assert dtheta_eval(small_gaussian_chart, free, 0.0, v1, v1) == 0


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_relabellings_are_in_the_kernel(harmonic, circle, seed):
    rng = np.random.default_rng(seed)
    gauge = gauge_direction(circle, CONSTRAINT * random_generator(rng, 1, degree=1))
    v = random_tangent(rng, circle)
    assert abs(dtheta_eval(circle, harmonic, 0.0, v, gauge)) <= 1e-6


def test_gauge_direction_needs_a_vanishing_generator(circle):
    with pytest.raises(ChartError):
        gauge_direction(circle, PhaseSpaceFunction.from_expression("q"))


def test_gauge_direction_needs_a_curve():
    axes = [np.linspace(-1, 1, 5), np.linspace(-1, 1, 5)]
    chart = init_from_phase_function("0", "1", axes, 0.1)
    with pytest.raises(ChartError):
        gauge_direction(chart, PhaseSpaceFunction.constant(0.0))


@pytest.mark.parametrize("seed", [0, 1])
@pytest.mark.parametrize("chart_name", ["circle", "small_gaussian_chart"])
def test_consistency_triangle(request, harmonic, chart_name, seed):
    chart = request.getfixturevalue(chart_name)
    rng = np.random.default_rng(seed)
    dF, dG = random_functional(rng, chart), random_functional(rng, chart)
    w = random_tangent(rng, chart)
    X_F = hamiltonian_vector(chart, harmonic, 0.0, dF)
    X_G = hamiltonian_vector(chart, harmonic, 0.0, dG)
    bracket = poisson_bracket(chart, harmonic, 0.0, dF, dG)
    scale = max(1.0, abs(bracket))
    assert abs(bracket + pairing_eval(chart, dG, X_F)) <= 1e-8 * scale
    assert abs(bracket - pairing_eval(chart, dF, X_G)) <= 1e-8 * scale
    assert abs(pairing_eval(chart, dF, w) + dtheta_eval(chart, harmonic, 0.0, X_F, w)) <= 1e-8 * scale


def test_bracket_is_antisymmetric(harmonic, circle):
    rng = np.random.default_rng(7)
    dF, dG = random_functional(rng, circle), random_functional(rng, circle)
    assert poisson_bracket(circle, harmonic, 0.0, dF, dG) == -poisson_bracket(circle, harmonic, 0.0, dG, dF)


def test_wave_action_rotates_the_phase(harmonic, circle):
    dP = p_phi_derivative(circle, harmonic, 0.0)
    X = hamiltonian_vector(circle, harmonic, 0.0, dP)
    assert np.allclose(X.dg(circle.q, circle.p), -1.0)
    assert np.allclose(X.dmu, 0.0)
    assert X.dphi == pytest.approx(1.0)
    dG = random_functional(np.random.default_rng(3), circle)
    assert abs(poisson_bracket(circle, harmonic, 0.0, dP, dG)) <= 1e-10


@pytest.mark.parametrize("kind", ["harmonic", "helmholtz"])
def test_energy_generates_the_flow(kind, harmonic):
    D = harmonic if kind == "harmonic" else make_symbol("helmholtz", {"speed": "1 + 0.2*q^2"})
    chart = init_from_phase_function("q - q^2/4", "exp(-q^2)", np.linspace(-1, 1, 41), 0.05)
    X = hamiltonian_vector(chart, D, 0.0, energy_derivative(chart, D, 0.0), time_dependent=True)
    data = frequency_data(D, chart.q, chart.p, 0.0)
    _, _, sdot, mudot = vector_field(chart, D, 0.0)
    assert np.allclose(X.dg(chart.q, chart.p), data.E, rtol=0, atol=1e-8)
    assert np.allclose(X.dmu, mudot, rtol=0, atol=1e-8)
    assert X.dphi == pytest.approx(sdot[chart.base_index], abs=1e-8)


def test_label_derivative():
    circle = circle_chart(1.0, 64, 0.1)
    assert np.allclose(label_derivative(circle, np.cos(circle.labels)), -np.sin(circle.labels), atol=1e-12)
    line = init_from_phase_function("0", "1", np.linspace(0, 1, 11), 0.1)
    assert np.allclose(label_derivative(line, line.labels**2), 2 * line.labels, atol=1e-12)


def test_perturb_translates(circle):
    v = TangentPerturbation(PhaseSpaceFunction.from_expression("p"), np.zeros(circle.n_markers), 0.5)
    moved = perturb(circle, v, 0.1)
    assert np.allclose(moved.q, circle.q + 0.1)
    assert np.allclose(moved.p, circle.p)
    assert np.allclose(moved.phases, circle.phases + 0.05)


def test_tangent_defect(circle):
    v = random_tangent(np.random.default_rng(5), circle)
    assert tangent_defect(circle, v) <= 1e-5


@pytest.mark.parametrize("seed", [0, 1])
def test_frozen_in(harmonic, circle, seed):
    v = random_tangent(np.random.default_rng(seed), circle)
    result = frozen_in_check(circle, harmonic, v, 0.0, 0.1, 0.01)
    assert result.defect <= 1e-4 * max(1.0, abs(result.theta_t0))


def _displacement(chart, v):
    """Marker coordinates moved per unit of ``v``: positions, momenta, densities and phases."""
    dq, dp = v.dg.hamiltonian_vector(chart.q, chart.p)
    rate = v.dg.phase_rate(chart.q, chart.p)
    return dq, dp, np.asarray(v.dmu, dtype=float), v.dphi + rate - rate[chart.base_index]


def _coordinate_forms(chart, D, v1, v2):
    """``sum a (dS - p.dq)`` with ``a = w rho mu`` on ``v1``, and its exterior derivative on ``(v1, v2)``."""
    data = frequency_data(D, chart.q, chart.p, 0.0)
    w = quadrature_weights(chart)
    a = w * data.rho * chart.weights

    def da(dq, dp, dmu):
        return w * (np.sum(data.drho_dq * dq + data.drho_dp * dp, axis=1) * chart.weights + data.rho * dmu)

    def c(dq, dS):
        return dS - np.sum(chart.p * dq, axis=1)

    dq1, dp1, dm1, dS1 = _displacement(chart, v1)
    dq2, dp2, dm2, dS2 = _displacement(chart, v2)
    one_form = np.sum(a * c(dq1, dS1))
    two_form = np.sum(da(dq1, dp1, dm1) * c(dq2, dS2) - da(dq2, dp2, dm2) * c(dq1, dS1)) - np.sum(
        a * np.sum(dp1 * dq2 - dp2 * dq1, axis=1)
    )
    return float(one_form), float(two_form)


@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("kind", ["harmonic", "helmholtz"])
def test_dtheta_is_the_exterior_derivative_of_theta(harmonic, kind, seed):
    if kind == "harmonic":
        D, chart = harmonic, circle_chart(1.0, 256, 0.05)
    else:
        D = make_symbol("helmholtz", {"speed": "1 + 0.2*q^2"})
        chart = init_from_phase_function("q - q^2/4", "exp(-q^2)", np.linspace(-1, 1, 41), 0.05)
    rng = np.random.default_rng(seed)
    v1, v2 = random_tangent(rng, chart), random_tangent(rng, chart)
    one_form, two_form = _coordinate_forms(chart, D, v1, v2)
    assert theta_eval(chart, D, 0.0, v1) == pytest.approx(one_form, rel=1e-10, abs=1e-12)
    assert dtheta_eval(chart, D, 0.0, v1, v2) == pytest.approx(two_form, rel=1e-8, abs=1e-10)


@pytest.mark.slow
def test_frozen_in_over_the_run_interval(harmonic, circle):
    v = tangent(PhaseSpaceFunction.from_expression("q"), n_markers=circle.n_markers)
    coarse = frozen_in_check(circle, harmonic, v, 0.0, 1.0, 1e-2, s=1e-5)
    fine = frozen_in_check(circle, harmonic, v, 0.0, 1.0, 1e-3, s=1e-5)
    scale = max(1.0, abs(fine.theta_t0))
    assert fine.theta_t0 == coarse.theta_t0
    assert fine.defect <= 1e-4 * scale
    # both sit at rounding level; refining must not make it worse beyond that
    assert fine.defect <= max(coarse.defect, 1e-10 * scale)
