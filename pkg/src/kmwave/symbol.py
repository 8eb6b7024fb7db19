"""Dispersion symbols and the frequency data derived from them.

A symbol ``D(q, p, t, U)`` is evaluated on batches of points: ``q`` and ``p`` have shape
``(N, n)``, ``t`` is a float and ``U`` has shape ``(N,)``. Vector partials (``dq``, ``dp``,
``dUq``, ``dUp``) return ``(N, n)`` arrays, the others ``(N,)``.

The frequency ``E_t(z)`` is the root of ``D(z, t, -E) = 0`` picked by Newton's method from
the symbol's ``branch_hint``; the weight is ``rho_t = dD/dU`` at that root.
"""

import logging

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
import sympy

from kmwave_core.expressions import ExpressionParser, ParsingError, SemanticError

from .exceptions import DegenerateSymbol, NoConvergence, SymbolError
from .functions import PhaseSpaceFunction, as_points, phase_space_symbols

logger = logging.getLogger(__name__)

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 50
DEGENERATE_THRESHOLD = 1e-10
SELF_CHECK_TOL = 1e-6

BUILTINS = ("schrodinger", "harmonic", "helmholtz", "user")

SymbolFn = Callable[[np.ndarray, np.ndarray, float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class DispersionSymbol:
    """Principal symbol with its first partials and the second partials in ``U``.

    Attributes:
        eval_fn, dU_fn, dq_fn, dp_fn, dt_fn: Raw batched callables.
        branch_hint: Starting value of the frequency Newton solve.
        label: Description used in file headers and reports.
        dim: Configuration dimension n.
        dUU_fn, dUq_fn, dUp_fn, dUt_fn: Second partials, needed by the weight gradient.
        is_finite_difference: True when the second partials are finite differences.
        expression: The sympy expression of D when the symbol came from one.
    """

    eval_fn: SymbolFn
    dU_fn: SymbolFn
    dq_fn: SymbolFn
    dp_fn: SymbolFn
    dt_fn: SymbolFn
    branch_hint: float = 0.0
    label: str = ""
    dim: int = 1
    dUU_fn: Optional[SymbolFn] = None
    dUq_fn: Optional[SymbolFn] = None
    dUp_fn: Optional[SymbolFn] = None
    dUt_fn: Optional[SymbolFn] = None
    is_finite_difference: bool = False
    expression: Optional[sympy.Expr] = field(default=None, compare=False)

    def _args(self, q, p, t, U) -> Tuple[np.ndarray, np.ndarray, float, np.ndarray]:
        q, p = as_points(q, p)
        U = np.broadcast_to(np.asarray(U, dtype=float), (q.shape[0],)).copy()
        return q, p, float(t), U

    def eval(self, q, p, t, U) -> np.ndarray:
        return self.eval_fn(*self._args(q, p, t, U))

    def dU(self, q, p, t, U) -> np.ndarray:
        return self.dU_fn(*self._args(q, p, t, U))

    def dq(self, q, p, t, U) -> np.ndarray:
        return self.dq_fn(*self._args(q, p, t, U))

    def dp(self, q, p, t, U) -> np.ndarray:
        return self.dp_fn(*self._args(q, p, t, U))

    def dt(self, q, p, t, U) -> np.ndarray:
        return self.dt_fn(*self._args(q, p, t, U))

    def second_partials(self, q, p, t, U) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """``(dUU, dUq, dUp, dUt)`` at the points."""
        args = self._args(q, p, t, U)
        assert self.dUU_fn and self.dUq_fn and self.dUp_fn and self.dUt_fn
        return self.dUU_fn(*args), self.dUq_fn(*args), self.dUp_fn(*args), self.dUt_fn(*args)

    def metadata(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "branch_hint": self.branch_hint,
            "is_finite_difference": self.is_finite_difference,
        }


@dataclass(frozen=True)
class FrequencyData:
    """Local wave data at a batch of phase-space points.

    ``E`` is the frequency, ``rho`` the weight, ``(qdot, pdot) = X_E`` the ray velocity.
    The remaining fields are the derivatives the structure checks need.
    """

    E: np.ndarray
    rho: np.ndarray
    qdot: np.ndarray
    pdot: np.ndarray
    drho_dq: np.ndarray
    drho_dp: np.ndarray
    dE_dt: np.ndarray
    drho_dt: np.ndarray
    phase_rate: np.ndarray

    @property
    def velocity(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.qdot, self.pdot

    @property
    def dE_dq(self) -> np.ndarray:
        return -self.pdot

    @property
    def dE_dp(self) -> np.ndarray:
        return self.qdot


def _compile(expr: sympy.Expr, args: Sequence[sympy.Symbol], dim: int) -> SymbolFn:
    fn = sympy.lambdify(list(args), expr, "numpy")

    def evaluate(q, p, t, U):
        columns = [q[:, k] for k in range(dim)] + [p[:, k] for k in range(dim)] + [t, U]
        return np.broadcast_to(np.asarray(fn(*columns), dtype=float), (q.shape[0],)).copy()

    return evaluate


def _compile_vector(exprs: Sequence[sympy.Expr], args: Sequence[sympy.Symbol], dim: int) -> SymbolFn:
    parts = [_compile(expr, args, dim) for expr in exprs]

    def evaluate(q, p, t, U):
        return np.stack([part(q, p, t, U) for part in parts], axis=1)

    return evaluate


def symbol_from_expression(
    expr: sympy.Expr,
    q_syms: Sequence[sympy.Symbol],
    p_syms: Sequence[sympy.Symbol],
    t_sym: sympy.Symbol,
    u_sym: sympy.Symbol,
    branch_hint: float,
    label: str,
) -> DispersionSymbol:
    """Build a symbol and all its partials from a sympy expression of ``(q, p, t, U)``."""
    dim = len(q_syms)
    args = [*q_syms, *p_syms, t_sym, u_sym]
    dU = sympy.diff(expr, u_sym)
    return DispersionSymbol(
        eval_fn=_compile(expr, args, dim),
        dU_fn=_compile(dU, args, dim),
        dq_fn=_compile_vector([sympy.diff(expr, s) for s in q_syms], args, dim),
        dp_fn=_compile_vector([sympy.diff(expr, s) for s in p_syms], args, dim),
        dt_fn=_compile(sympy.diff(expr, t_sym), args, dim),
        branch_hint=float(branch_hint),
        label=label,
        dim=dim,
        dUU_fn=_compile(sympy.diff(dU, u_sym), args, dim),
        dUq_fn=_compile_vector([sympy.diff(dU, s) for s in q_syms], args, dim),
        dUp_fn=_compile_vector([sympy.diff(dU, s) for s in p_syms], args, dim),
        dUt_fn=_compile(sympy.diff(dU, t_sym), args, dim),
        expression=expr,
    )


def _difference_in(fn: SymbolFn, slot: str, index: int = 0) -> SymbolFn:
    """Central difference of ``fn`` in one argument, step scaled to the argument."""

    def evaluate(q, p, t, U):
        if slot == "U":
            h = 1e-6 * np.maximum(1.0, np.abs(U))
            return (fn(q, p, t, U + h) - fn(q, p, t, U - h)) / (2 * h)
        if slot == "t":
            h = 1e-6 * max(1.0, abs(t))
            return (fn(q, p, t + h, U) - fn(q, p, t - h, U)) / (2 * h)
        base = q if slot == "q" else p
        h = 1e-6 * np.maximum(1.0, np.abs(base[:, index]))
        shift = np.zeros_like(base)
        shift[:, index] = h
        if slot == "q":
            return (fn(q + shift, p, t, U) - fn(q - shift, p, t, U)) / (2 * h)
        return (fn(q, p + shift, t, U) - fn(q, p - shift, t, U)) / (2 * h)

    return evaluate


def _stack_differences(fn: SymbolFn, slot: str, dim: int) -> SymbolFn:
    parts = [_difference_in(fn, slot, k) for k in range(dim)]

    def evaluate(q, p, t, U):
        return np.stack([part(q, p, t, U) for part in parts], axis=1)

    return evaluate


def user_symbol(
    closures: Mapping[str, SymbolFn], branch_hint: float = 0.0, dim: int = 1, label: str = "user"
) -> DispersionSymbol:
    """Build a symbol from batched callables.

    ``eval, dU, dq, dp, dt`` are required. ``dUU, dUq, dUp, dUt`` are optional; missing
    ones are replaced by central differences of ``dU`` and the symbol is flagged.

    Raises:
        SymbolError: If a required closure is missing or an unknown one is given.
    """
    required = ["eval", "dU", "dq", "dp", "dt"]
    optional = ["dUU", "dUq", "dUp", "dUt"]
    missing = [name for name in required if closures.get(name) is None]
    if missing:
        raise SymbolError(
            f"User symbol is missing partial derivatives: {', '.join(missing)}.", missing=missing
        )
    unknown = sorted(set(closures) - set(required) - set(optional))
    if unknown:
        raise SymbolError(f"Unknown user symbol closures: {', '.join(unknown)}.", unknown=unknown)

    dU = closures["dU"]
    fallback = {
        "dUU": _difference_in(dU, "U"),
        "dUq": _stack_differences(dU, "q", dim),
        "dUp": _stack_differences(dU, "p", dim),
        "dUt": _difference_in(dU, "t"),
    }
    is_fd = any(closures.get(name) is None for name in optional)
    if is_fd:
        logger.warning(
            f"Symbol '{label}' has no analytic second partials, using finite differences."
        )
    return DispersionSymbol(
        eval_fn=closures["eval"],
        dU_fn=dU,
        dq_fn=closures["dq"],
        dp_fn=closures["dp"],
        dt_fn=closures["dt"],
        branch_hint=float(branch_hint),
        label=label,
        dim=dim,
        dUU_fn=closures.get("dUU") or fallback["dUU"],
        dUq_fn=closures.get("dUq") or fallback["dUq"],
        dUp_fn=closures.get("dUp") or fallback["dUp"],
        dUt_fn=closures.get("dUt") or fallback["dUt"],
        is_finite_difference=is_fd,
    )


def _parse(parser: ExpressionParser, text: Any, what: str) -> sympy.Expr:
    if isinstance(text, (int, float)):
        return sympy.Float(text)
    try:
        return parser.parse(str(text))
    except (ParsingError, SemanticError) as error:
        raise SymbolError(f"Invalid {what} expression: {error}", parameter=what) from error


def make_symbol(
    kind: str,
    params: Optional[Mapping[str, Any]] = None,
    branch_hint: Optional[float] = None,
    dim: int = 1,
    closures: Optional[Mapping[str, SymbolFn]] = None,
    check: bool = True,
) -> DispersionSymbol:
    """
    Build a dispersion symbol from a builtin descriptor.

    Args:
        kind: One of ``schrodinger`` (param ``potential``, an expression in q and t),
            ``harmonic`` (param ``omega``), ``helmholtz`` (param ``speed``, an expression in q)
            or ``user`` (param ``expression`` in q, p, t, U, or ``closures``).
        params: Parameters of the builtin.
        branch_hint: Newton starting frequency. Defaults to 1 for helmholtz and 0 otherwise.
        dim: Configuration dimension.
        closures: Batched callables for a user symbol given in Python.
        check: Run the finite-difference self-check of the partials.

    Raises:
        SymbolError: Unknown kind or parameter, invalid expression, missing closure or a
            failed self-check.
    """
    params = dict(params or {})
    if kind not in BUILTINS:
        raise SymbolError(f"Unknown symbol '{kind}'. Choose among {', '.join(BUILTINS)}.", kind=kind)

    allowed = {
        "schrodinger": {"potential"},
        "harmonic": {"omega"},
        "helmholtz": {"speed"},
        "user": {"expression"},
    }[kind]
    unknown = sorted(set(params) - allowed)
    if unknown:
        raise SymbolError(
            f"Unknown parameters for symbol '{kind}': {', '.join(unknown)}.", kind=kind, unknown=unknown
        )
    if branch_hint is None:
        branch_hint = 1.0 if kind == "helmholtz" else 0.0

    if kind == "user" and closures is not None:
        symbol = user_symbol(closures, branch_hint=branch_hint, dim=dim)
    else:
        q_names, p_names = phase_space_symbols(dim)
        parser = ExpressionParser(q_names + p_names + ["t", "U"])
        q_syms = [parser.symbols[name] for name in q_names]
        p_syms = [parser.symbols[name] for name in p_names]
        t_sym, u_sym = parser.symbols["t"], parser.symbols["U"]
        p_norm2 = sum(s**2 for s in p_syms)
        q_norm2 = sum(s**2 for s in q_syms)

        if kind == "schrodinger":
            potential = _parse(
                ExpressionParser(q_names + ["t"]), params.get("potential", "0"), "potential"
            )
            expr = -u_sym - p_norm2 / 2 - _rebind(potential, parser)
            label = f"schrodinger(V={potential})"
        elif kind == "harmonic":
            omega = float(params.get("omega", 1.0))
            expr = -u_sym - (p_norm2 + omega**2 * q_norm2) / 2
            label = f"harmonic(omega={omega!r})"
        elif kind == "helmholtz":
            speed = _rebind(
                _parse(ExpressionParser(q_names), params.get("speed", "1"), "speed"), parser
            )
            expr = u_sym**2 - speed**2 * p_norm2
            label = f"helmholtz(c={speed})"
        else:
            if "expression" not in params:
                raise SymbolError(
                    "User symbol needs an 'expression' parameter or Python closures.", kind=kind
                )
            expr = _parse(parser, params["expression"], "expression")
            label = f"user(D={expr})"
        symbol = symbol_from_expression(expr, q_syms, p_syms, t_sym, u_sym, branch_hint, label)

    if check:
        defect = derivative_defect(symbol)
        if not defect <= SELF_CHECK_TOL:
            raise SymbolError(
                f"Partial derivatives of '{symbol.label}' disagree with finite differences.",
                defect=defect,
            )
    return symbol


def _rebind(expr: sympy.Expr, parser: ExpressionParser) -> sympy.Expr:
    return expr.subs({s: parser.symbols[s.name] for s in expr.free_symbols if s.name in parser.symbols})


def derivative_defect(
    D: DispersionSymbol, n_points: int = 16, seed: int = 0, step: float = 1e-5
) -> float:
    """Largest relative gap between the first partials of D and central differences of eval.

    Points are drawn uniformly from ``[-1, 1]`` in q, p and U and from ``[0, 1]`` in t.
    """
    rng = np.random.default_rng(seed)
    q = rng.uniform(-1.0, 1.0, (n_points, D.dim))
    p = rng.uniform(-1.0, 1.0, (n_points, D.dim))
    U = rng.uniform(-1.0, 1.0, n_points)
    t = float(rng.uniform(0.0, 1.0))

    def relative(numeric, analytic):
        gap = np.abs(numeric - analytic) / np.maximum(1.0, np.abs(analytic))
        return float(np.nanmax(gap)) if np.any(np.isfinite(gap)) else 0.0

    worst = relative(
        (D.eval(q, p, t, U + step) - D.eval(q, p, t, U - step)) / (2 * step), D.dU(q, p, t, U)
    )
    worst = max(
        worst,
        relative((D.eval(q, p, t + step, U) - D.eval(q, p, t - step, U)) / (2 * step), D.dt(q, p, t, U)),
    )
    dq, dp = D.dq(q, p, t, U), D.dp(q, p, t, U)
    for k in range(D.dim):
        shift = np.zeros_like(q)
        shift[:, k] = step
        worst = max(
            worst,
            relative((D.eval(q + shift, p, t, U) - D.eval(q - shift, p, t, U)) / (2 * step), dq[:, k]),
            relative((D.eval(q, p + shift, t, U) - D.eval(q, p - shift, t, U)) / (2 * step), dp[:, k]),
        )
    return worst


def solve_frequency(
    D: DispersionSymbol, q, p, t: float, guess: Optional[np.ndarray] = None
) -> np.ndarray:
    """
    Newton solve of ``D(q, p, t, -E) = 0`` for every point.

    Raises:
        DegenerateSymbol: |dD/dU| below the threshold at an iterate.
        NoConvergence: A point is not converged after the iteration budget.
    """
    q, p = as_points(q, p)
    n_points = q.shape[0]
    if guess is None:
        E = np.full(n_points, D.branch_hint, dtype=float)
    else:
        E = np.broadcast_to(np.asarray(guess, dtype=float), (n_points,)).copy()

    residual = D.eval(q, p, t, -E)
    for iteration in range(NEWTON_MAX_ITER):
        active = ~(np.abs(residual) <= NEWTON_TOL * np.maximum(1.0, np.abs(E)))
        if not np.any(active):
            logger.debug(f"Frequency Newton converged in {iteration} iterations.")
            return E
        slope = D.dU(q, p, t, -E)
        degenerate = active & ~(np.abs(slope) >= DEGENERATE_THRESHOLD)
        if np.any(degenerate):
            index = int(np.flatnonzero(degenerate)[0])
            raise DegenerateSymbol(
                f"dD/dU vanishes at point {index}.", index=index, dU=float(slope[index])
            )
        E = np.where(active, E + residual / np.where(active, slope, 1.0), E)
        residual = D.eval(q, p, t, -E)

    active = ~(np.abs(residual) <= NEWTON_TOL * np.maximum(1.0, np.abs(E)))
    if np.any(active):
        index = int(np.flatnonzero(active)[0])
        raise NoConvergence(
            f"Frequency Newton did not converge at point {index}.",
            index=index,
            residual=float(np.abs(residual[index])),
        )
    return E


def frequency_data(
    D: DispersionSymbol, q, p, t: float, guess: Optional[np.ndarray] = None
) -> FrequencyData:
    """
    Frequency, weight and ray velocity at a batch of points, with the derivatives of the weight.

    Args:
        D: The dispersion symbol.
        q, p: Points, ``(N, n)`` arrays or anything ``as_points`` accepts.
        t: Time.
        guess: Optional warm start for the frequency Newton. Defaults to ``D.branch_hint``.
    """
    q, p = as_points(q, p)
    E = solve_frequency(D, q, p, t, guess)
    U = -E
    rho = D.dU(q, p, t, U)
    tiny = ~(np.abs(rho) >= DEGENERATE_THRESHOLD)
    if np.any(tiny):
        index = int(np.flatnonzero(tiny)[0])
        raise DegenerateSymbol(f"dD/dU vanishes at point {index}.", index=index, dU=float(rho[index]))

    E_q = D.dq(q, p, t, U) / rho[:, None]
    E_p = D.dp(q, p, t, U) / rho[:, None]
    E_t = D.dt(q, p, t, U) / rho
    dUU, dUq, dUp, dUt = D.second_partials(q, p, t, U)
    return FrequencyData(
        E=E,
        rho=rho,
        qdot=E_p,
        pdot=-E_q,
        drho_dq=dUq - dUU[:, None] * E_q,
        drho_dp=dUp - dUU[:, None] * E_p,
        dE_dt=E_t,
        drho_dt=dUt - dUU * E_t,
        phase_rate=np.sum(p * E_p, axis=1) - E,
    )


def frequency_function(D: DispersionSymbol, t: float) -> PhaseSpaceFunction:
    """``E_t`` as a phase-space function with its gradient."""

    def jet(q, p):
        data = frequency_data(D, q, p, t)
        return data.E, data.dE_dq, data.dE_dp

    return PhaseSpaceFunction(jet, f"E[{D.label}](t={t!r})")


def weight_function(D: DispersionSymbol, t: float) -> PhaseSpaceFunction:
    """``rho_t`` as a phase-space function with its gradient."""

    def jet(q, p):
        data = frequency_data(D, q, p, t)
        return data.rho, data.drho_dq, data.drho_dp

    return PhaseSpaceFunction(jet, f"rho[{D.label}](t={t!r})")


def dispersion_residual(D: DispersionSymbol, chart, t: float) -> float:
    """``max |D(z_i, t, -E_t(z_i))|`` over the markers of a chart."""
    E = solve_frequency(D, chart.q, chart.p, t)
    return float(np.max(np.abs(D.eval(chart.q, chart.p, t, -E))))
