import numpy as np
import pytest
import sympy

from kmwave.functions import PhaseSpaceFunction, as_points, compile_scalar, gradient_defect, poisson


@pytest.fixture
def points():
    rng = np.random.default_rng(0)
    return rng.uniform(-1, 1, 16), rng.uniform(-1, 1, 16)


def test_as_points_shapes():
    q, p = as_points(1.0, 2.0)
    assert q.shape == p.shape == (1, 1)
    q, p = as_points(np.zeros(5), np.ones(5))
    assert q.shape == (5, 1)
    with pytest.raises(ValueError):
        as_points(np.zeros(3), np.zeros(4))


def test_canonical_bracket(points):
    q_fn = PhaseSpaceFunction.from_expression("q")
    p_fn = PhaseSpaceFunction.from_expression("p")
    assert np.allclose(poisson(q_fn, p_fn, *points), 1.0)
    assert np.allclose(poisson(p_fn, q_fn, *points), -1.0)


def test_hamiltonian_vector_of_harmonic_energy(points):
    energy = PhaseSpaceFunction.from_expression("(q^2 + p^2)/2")
    qdot, pdot = energy.hamiltonian_vector(*points)
    q, p = as_points(*points)
    assert np.allclose(qdot, p)
    assert np.allclose(pdot, -q)


def test_phase_rate(points):
    f = PhaseSpaceFunction.from_expression("p^2/2 + q")
    q, p = as_points(*points)
    assert np.allclose(f.phase_rate(*points), p[:, 0] ** 2 / 2 - q[:, 0])


def test_algebra_gradients(points):
    f = PhaseSpaceFunction.from_expression("sin(q) * p")
    g = PhaseSpaceFunction.from_expression("1 + q^2 + p^2")
    for h in (f + g, f - 2.0, 3.0 * f, f * g, f / g, -g, 1.0 + f):
        assert gradient_defect(h, *points) <= 1e-8


def test_bracket_method_and_leibniz(points):
    f = PhaseSpaceFunction.from_expression("q^2 * p")
    g = PhaseSpaceFunction.from_expression("exp(q) + p")
    h = PhaseSpaceFunction.from_expression("q * p^3")
    left = (f * g).bracket(h, *points)
    right = f(*points) * g.bracket(h, *points) + g(*points) * f.bracket(h, *points)
    assert np.allclose(left, right)


def test_constant_has_zero_gradient(points):
    c = PhaseSpaceFunction.constant(2.5)
    dq, dp = c.gradient(*points)
    assert np.all(c(*points) == 2.5)
    assert not np.any(dq) and not np.any(dp)


def test_from_sympy_expression_in_two_dimensions():
    q0, p1 = sympy.symbols("q0 p1", real=True)
    f = PhaseSpaceFunction.from_expression(q0 * p1, dim=2)
    q = np.array([[1.0, 2.0], [3.0, 4.0]])
    p = np.array([[5.0, 6.0], [7.0, 8.0]])
    value, dq, dp = f.jet(q, p)
    assert np.allclose(value, [6.0, 24.0])
    assert np.allclose(dq, [[6.0, 0.0], [8.0, 0.0]])
    assert np.allclose(dp, [[0.0, 1.0], [0.0, 3.0]])


def test_compile_scalar_broadcasts():
    fn = compile_scalar("2", ["q"])
    assert np.array_equal(fn(np.zeros(3)), [2.0, 2.0, 2.0])
