"""Phase-space functions with analytic gradients.

A :class:`PhaseSpaceFunction` evaluates a real function of ``(q, p)`` together with its
partial derivatives at many points at once. Points are given as arrays of shape ``(N, n)``;
one-dimensional arrays are read as ``n = 1``.

Poisson brackets follow ``{f, g} = f_q . g_p - f_p . g_q`` and the Hamiltonian vector field
of ``f`` is ``X_f = (f_p, -f_q)``.
"""

from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple, Union

import numpy as np
import sympy

from kmwave_core.expressions import ExpressionParser

Jet = Tuple[np.ndarray, np.ndarray, np.ndarray]


def as_points(q: np.ndarray, p: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Return ``q`` and ``p`` as float arrays of shape ``(N, n)``."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    if q.ndim == 0:
        q = q.reshape(1, 1)
    elif q.ndim == 1:
        q = q[:, None]
    if p.ndim == 0:
        p = p.reshape(1, 1)
    elif p.ndim == 1:
        p = p[:, None]
    if q.shape != p.shape:
        raise ValueError(f"q and p shapes differ: {q.shape} != {p.shape}.")
    return q, p


def phase_space_symbols(dim: int) -> Tuple[List[str], List[str]]:
    """Variable names used in expressions: ``q, p`` in one dimension, ``q0.., p0..`` otherwise."""
    if dim == 1:
        return ["q"], ["p"]
    return [f"q{k}" for k in range(dim)], [f"p{k}" for k in range(dim)]


def _broadcast(values, n_points: int) -> np.ndarray:
    return np.broadcast_to(np.asarray(values, dtype=float), (n_points,)).copy()


@dataclass(frozen=True)
class PhaseSpaceFunction:
    """A real function on phase space with its gradient.

    Attributes:
        jet_fn: Callable ``(q, p) -> (value, dq, dp)`` on ``(N, n)`` arrays.
        label: Human readable description, kept for reports.
    """

    jet_fn: Callable[[np.ndarray, np.ndarray], Jet]
    label: str = ""

    def jet(self, q: np.ndarray, p: np.ndarray) -> Jet:
        q, p = as_points(q, p)
        value, dq, dp = self.jet_fn(q, p)
        shape = q.shape
        return (
            _broadcast(value, shape[0]),
            np.broadcast_to(np.asarray(dq, dtype=float), shape).copy(),
            np.broadcast_to(np.asarray(dp, dtype=float), shape).copy(),
        )

    def __call__(self, q: np.ndarray, p: np.ndarray) -> np.ndarray:
        return self.jet(q, p)[0]

    def gradient(self, q: np.ndarray, p: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        _, dq, dp = self.jet(q, p)
        return dq, dp

    def hamiltonian_vector(self, q: np.ndarray, p: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Components ``(f_p, -f_q)`` of ``X_f`` at the points."""
        dq, dp = self.gradient(q, p)
        return dp, -dq

    def one_form_on_vector(self, q: np.ndarray, p: np.ndarray) -> np.ndarray:
        """The canonical one-form ``p . dq`` applied to ``X_f``, that is ``p . f_p``."""
        _, p_arr = as_points(q, p)
        _, dp = self.gradient(q, p)
        return np.sum(p_arr * dp, axis=1)

    def phase_rate(self, q: np.ndarray, p: np.ndarray) -> np.ndarray:
        """``p . f_p - f``, the phase integrand carried along ``X_f``."""
        return self.one_form_on_vector(q, p) - self(q, p)

    def bracket(self, other: "PhaseSpaceFunction", q: np.ndarray, p: np.ndarray) -> np.ndarray:
        return poisson(self, other, q, p)

    def __add__(self, other: Union["PhaseSpaceFunction", float]) -> "PhaseSpaceFunction":
        other = _lift(other)

        def jet(q, p):
            a, b = self.jet(q, p), other.jet(q, p)
            return a[0] + b[0], a[1] + b[1], a[2] + b[2]

        return PhaseSpaceFunction(jet, f"({self.label}) + ({other.label})")

    __radd__ = __add__

    def __neg__(self) -> "PhaseSpaceFunction":
        def jet(q, p):
            v, dq, dp = self.jet(q, p)
            return -v, -dq, -dp

        return PhaseSpaceFunction(jet, f"-({self.label})")

    def __sub__(self, other: Union["PhaseSpaceFunction", float]) -> "PhaseSpaceFunction":
        return self + (-_lift(other))

    def __mul__(self, other: Union["PhaseSpaceFunction", float]) -> "PhaseSpaceFunction":
        other = _lift(other)

        def jet(q, p):
            (u, uq, up), (v, vq, vp) = self.jet(q, p), other.jet(q, p)
            return u * v, uq * v[:, None] + u[:, None] * vq, up * v[:, None] + u[:, None] * vp

        return PhaseSpaceFunction(jet, f"({self.label}) * ({other.label})")

    __rmul__ = __mul__

    def __truediv__(self, other: Union["PhaseSpaceFunction", float]) -> "PhaseSpaceFunction":
        other = _lift(other)

        def jet(q, p):
            (u, uq, up), (v, vq, vp) = self.jet(q, p), other.jet(q, p)
            inv = 1.0 / v
            ratio = u * inv
            return (
                ratio,
                (uq - ratio[:, None] * vq) * inv[:, None],
                (up - ratio[:, None] * vp) * inv[:, None],
            )

        return PhaseSpaceFunction(jet, f"({self.label}) / ({other.label})")

    @classmethod
    def constant(cls, value: float) -> "PhaseSpaceFunction":
        def jet(q, p):
            return np.full(q.shape[0], float(value)), np.zeros_like(q), np.zeros_like(p)

        return cls(jet, repr(float(value)))

    @classmethod
    def from_expression(
        cls, expression: Union[str, sympy.Expr], dim: int = 1
    ) -> "PhaseSpaceFunction":
        """Compile an expression in ``q, p`` (or ``q0.., p0..``) to a vectorized function.

        Raises:
            ParsingError, SemanticError: If a string expression does not parse.
        """
        q_names, p_names = phase_space_symbols(dim)
        parser = ExpressionParser(q_names + p_names)
        expr = parser.parse(expression) if isinstance(expression, str) else expression
        q_syms = [parser.symbols[name] for name in q_names]
        p_syms = [parser.symbols[name] for name in p_names]
        # symbols created elsewhere (make_symbol) are matched by name
        expr = expr.subs(
            {s: parser.symbols[s.name] for s in expr.free_symbols if s.name in parser.symbols}
        )
        args = q_syms + p_syms
        value_fn = sympy.lambdify(args, expr, "numpy")
        dq_fns = [sympy.lambdify(args, sympy.diff(expr, s), "numpy") for s in q_syms]
        dp_fns = [sympy.lambdify(args, sympy.diff(expr, s), "numpy") for s in p_syms]

        def jet(q, p):
            columns = [q[:, k] for k in range(dim)] + [p[:, k] for k in range(dim)]
            n_points = q.shape[0]
            value = _broadcast(value_fn(*columns), n_points)
            dq = np.stack([_broadcast(fn(*columns), n_points) for fn in dq_fns], axis=1)
            dp = np.stack([_broadcast(fn(*columns), n_points) for fn in dp_fns], axis=1)
            return value, dq, dp

        return cls(jet, str(expr))


def _lift(value: Union[PhaseSpaceFunction, float]) -> PhaseSpaceFunction:
    if isinstance(value, PhaseSpaceFunction):
        return value
    return PhaseSpaceFunction.constant(float(value))


def poisson(
    f: PhaseSpaceFunction, g: PhaseSpaceFunction, q: np.ndarray, p: np.ndarray
) -> np.ndarray:
    """``{f, g} = f_q . g_p - f_p . g_q`` at the points."""
    fq, fp = f.gradient(q, p)
    gq, gp = g.gradient(q, p)
    return np.sum(fq * gp - fp * gq, axis=1)


def gradient_defect(
    f: PhaseSpaceFunction, q: np.ndarray, p: np.ndarray, step: float = 1e-6
) -> float:
    """Largest relative gap between the analytic gradient and central finite differences."""
    q, p = as_points(q, p)
    _, dq, dp = f.jet(q, p)
    worst = 0.0
    for analytic, which in ((dq, 0), (dp, 1)):
        for k in range(q.shape[1]):
            shift = np.zeros_like(q)
            shift[:, k] = step
            if which == 0:
                numeric = (f(q + shift, p) - f(q - shift, p)) / (2 * step)
            else:
                numeric = (f(q, p + shift) - f(q, p - shift)) / (2 * step)
            scale = np.maximum(1.0, np.abs(analytic[:, k]))
            worst = max(worst, float(np.max(np.abs(numeric - analytic[:, k]) / scale)))
    return worst


def compile_scalar(expression: Union[str, sympy.Expr], variables: Sequence[str]) -> Callable:
    """Compile an expression in the given variables to a vectorized numpy callable."""
    parser = ExpressionParser(variables)
    expr = parser.parse(expression) if isinstance(expression, str) else expression
    fn = sympy.lambdify([parser.symbols[name] for name in variables], expr, "numpy")

    def evaluate(*args):
        shape = np.broadcast(*[np.asarray(a, dtype=float) for a in args]).shape
        return np.broadcast_to(np.asarray(fn(*args), dtype=float), shape).copy()

    return evaluate
