import numpy as np
import pytest

from kmwave.dynamics import EvolveSettings, evolve
from kmwave.exceptions import CausticAtQuery, ChartError
from kmwave.manifold import init_from_phase_function
from kmwave.reconstruct import Method, branches_at, field_at, field_profile
from kmwave.symbol import make_symbol


@pytest.fixture(scope="module")
def focused_gaussians():
    """Converging Gaussian at the focus and past it."""
    free = make_symbol("schrodinger")
    chart = init_from_phase_function("-q^2/2", "exp(-q^2)", np.linspace(-3, 3, 601), 0.005)
    trajectory = evolve(chart, free, EvolveSettings(h=0.01, t1=2.0, save_every=100))
    assert trajectory.times == pytest.approx([0.0, 1.0, 2.0])
    return trajectory.states[1], trajectory.states[2]


def test_plane_wave():
    chart = init_from_phase_function("q", "1", np.linspace(-1, 1, 21), 0.1)
    sample = field_at(chart, 0.3)
    assert sample.method == Method.BRANCH_SUM
    assert len(sample.branches) == 1
    assert abs(sample.value - np.exp(3j)) <= 1e-12


def test_initial_gaussian(gaussian_chart):
    sample = field_at(gaussian_chart, 0.5)
    expected = np.exp(-0.25) * np.exp(-1j * 0.125 / 0.005)
    assert abs(sample.value - expected) <= 1e-6


def test_outside_the_chart_is_zero(gaussian_chart):
    sample = field_at(gaussian_chart, 4.0)
    assert sample.branches == ()
    assert sample.value == 0


def test_focus_peak(focused_gaussians):
    focus, _ = focused_gaussians
    with pytest.raises(CausticAtQuery):
        field_at(focus, 0.0)
    (sample,) = field_profile(focus, [0.0])
    assert sample.method == Method.MOMENTUM_INTEGRAL
    assert abs(sample.value) == pytest.approx(10.0, rel=1e-3)


def test_past_the_focus(focused_gaussians):
    _, past = focused_gaussians
    sample = field_at(past, 0.5)
    assert [b.maslov for b in sample.branches] == [1]
    expected = -1j * np.exp(-0.25) * np.exp(1j * 0.125 / 0.005)
    assert abs(sample.value - expected) <= 1e-6


def test_harmonic_half_period(harmonic):
    chart = init_from_phase_function("0", "exp(-q^2)", np.linspace(-3, 3, 301), 0.05)
    final = evolve(chart, harmonic, EvolveSettings(h=1e-2, t1=np.pi)).final
    for q in (-0.7, 0.2, 1.1):
        assert abs(field_at(final, q).value + 1j * np.exp(-(q**2))) <= 1e-6


def test_fold_has_three_branches(free):
    chart = init_from_phase_function("-q^2/2 + q^4/8", "1", np.linspace(-2, 2, 401), 0.05)
    final = evolve(chart, free, EvolveSettings(h=0.01, t1=2.0, save_every=200)).final
    branches = branches_at(final, 0.0)
    assert len(branches) == 3
    assert [b.maslov for b in branches] == [0, 1, 0]
    assert [b.segment_index for b in branches] == sorted(b.segment_index for b in branches)
    assert not any(b.flagged for b in branches)
    assert all(np.isfinite(b.amplitude) for b in branches)


def test_momentum_integral_away_from_caustics(gaussian_chart):
    direct = field_at(gaussian_chart, 0.5).value
    integral = field_at(gaussian_chart, 0.5, method=Method.MOMENTUM_INTEGRAL)
    assert integral.method == Method.MOMENTUM_INTEGRAL
    assert abs(integral.value - direct) <= 2e-2 * abs(direct)


def test_profile_order_and_thread_count(small_gaussian_chart):
    grid = np.linspace(-1.5, 1.5, 31)
    serial = field_profile(small_gaussian_chart, grid)
    parallel = field_profile(small_gaussian_chart, grid, threads=4)
    assert [s.q for s in serial] == list(grid)
    assert [s.value for s in serial] == [s.value for s in parallel]


def test_profile_epsilon_override(small_gaussian_chart):
    (sample,) = field_profile(small_gaussian_chart, [0.5], epsilon=0.1)
    assert abs(sample.value - np.exp(-0.25) * np.exp(-1j * 0.125 / 0.1)) <= 1e-6


def test_circle_branches(circle):
    branches = branches_at(circle, 0.0)
    assert len(branches) == 2
    assert sorted(round(b.p, 6) for b in branches) == [-1.0, 1.0]


def test_grid_charts_are_rejected():
    axes = [np.linspace(-1, 1, 5), np.linspace(-1, 1, 5)]
    chart = init_from_phase_function("0", "1", axes, 0.1)
    with pytest.raises(ChartError):
        field_at(chart, 0.0)


def _free_propagation(psi, dx, epsilon, t):
    """Exact free evolution ``i eps psi_t = -eps^2/2 psi_qq`` of periodic samples."""
    k = 2 * np.pi * np.fft.fftfreq(psi.size, d=dx)
    return np.fft.ifft(np.fft.fft(psi) * np.exp(-0.5j * epsilon * k**2 * t))


def test_semiclassical_error_is_first_order(free):
    """A diverging Gaussian beam against the exact propagator: the error shrinks like eps."""
    x = np.linspace(-20, 20, 2**14, endpoint=False)
    dx = x[1] - x[0]
    q_grid = x[(x >= 0) & (x <= 2)][::41]
    chart = init_from_phase_function("q + q^2/4", "exp(-q^2)", np.linspace(-4, 4, 801), 0.04)
    final = evolve(chart, free, EvolveSettings(h=0.01, t1=1.0)).final

    epsilons = np.array([0.04, 0.02, 0.01])
    errors = []
    for epsilon in epsilons:
        psi0 = np.exp(-(x**2)) * np.exp(1j * (x + x**2 / 4) / epsilon)
        exact = _free_propagation(psi0, dx, epsilon, 1.0)[np.isin(x, q_grid)]
        samples = field_profile(final, q_grid, epsilon=epsilon)
        assert all(s.method == Method.BRANCH_SUM for s in samples)
        errors.append(np.max(np.abs(np.array([s.value for s in samples]) - exact)))

    slope = np.polyfit(np.log(epsilons), np.log(errors), 1)[0]
    assert slope == pytest.approx(1.0, abs=0.2)
    assert errors[-1] <= 0.01
