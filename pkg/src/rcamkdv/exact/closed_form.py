"""Exact multi-hump solutions U, V, their common denominator Q, the generating functions in an auxiliary
parameter eps, and residuals of the reduced ODE system

    U''' - lambda1^2 U' + (6/k^2) U U' - (2b/(a k^2)) V V' = 0
    V''' - lambda2^2 V' + (3/k^2) U V' = 0.

All evaluators accept scalars or numpy arrays and return the same kind.
Every exponential is guarded before it is taken: an exponent above 700 raises
EvaluationRangeError instead of producing inf.
"""

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.typing import ArrayLike, NDArray

from rcamkdv import log
from rcamkdv.algebra.expsum import MAX_EXPONENT, ExpSum, Lattice
from rcamkdv.errors import EvaluationRangeError, StencilDomainError, VanishingDenominatorError
from rcamkdv.numerics.stencils import VectorFunction, central_derivative
from rcamkdv.params import Params
from rcamkdv.wave.samples import CurveSample

Q_FLOOR = 1e-300
ODE_STEP_SCALE = 0.02
TAYLOR_STEP = 0.05

FloatArray = NDArray[np.float64]


@dataclass(frozen=True)
class ClosedFormContext:
    """Parameters of the exact solution.

    ``lambda1``/``lambda2`` override the roots used inside the solution formulas
    (the equation keeps the roots derived from ``params``); leave them unset
    except to inject faults when testing the verifier.
    """

    params: Params
    lambda1_override: float | None = None
    lambda2_override: float | None = None

    @cached_property
    def lambda1(self) -> float:
        return self.lambda1_override if self.lambda1_override is not None else self.params.lambda1

    @cached_property
    def lambda2(self) -> float:
        return self.lambda2_override if self.lambda2_override is not None else self.params.lambda2

    @cached_property
    def q_prefactor(self) -> float:
        """8 a k^4 lambda2^2 (lambda1 - 2 lambda2)(lambda1 + lambda2)^2 (lambda1 + 2 lambda2)^3."""
        p, L, M = self.params, self.lambda1, self.lambda2
        return 8.0 * p.a * p.k**4 * M**2 * (L - 2 * M) * (L + M) ** 2 * (L + 2 * M) ** 3

    @cached_property
    def alpha_factor(self) -> float:
        """lambda1^2 - 3 lambda1 lambda2 + 2 lambda2^2 = (lambda1 - lambda2)(lambda1 - 2 lambda2)."""
        L, M = self.lambda1, self.lambda2
        return L**2 - 3 * L * M + 2 * M**2

    @cached_property
    def beta_factor(self) -> float:
        """lambda1^2 + 3 lambda1 lambda2 + 2 lambda2^2 = (lambda1 + lambda2)(lambda1 + 2 lambda2)."""
        L, M = self.lambda1, self.lambda2
        return L**2 + 3 * L * M + 2 * M**2

    @property
    def lattice(self) -> Lattice:
        return Lattice(self.lambda1, self.lambda2)

    def perturbed(self, lambda2_scale: float) -> "ClosedFormContext":
        return ClosedFormContext(self.params, self.lambda1_override, self.lambda2 * lambda2_scale)


def _exp(exponent: float, xi: FloatArray) -> FloatArray:
    argument = exponent * xi
    if np.any(argument > MAX_EXPONENT):
        raise EvaluationRangeError(
            f"exp({float(np.max(argument)):.1f}) exceeds the overflow guard",
            xi=float(xi.flat[int(np.argmax(argument))]),
        )
    return np.exp(argument)


def _check_q(q: FloatArray, xi: FloatArray) -> None:
    small = np.abs(q) < Q_FLOOR
    if np.any(small):
        where = float(np.broadcast_to(xi, q.shape)[small].flat[0])
        raise VanishingDenominatorError(f"Q vanishes at xi={where:.17g}", xi=where)


def _output(values: FloatArray, like: ArrayLike) -> float | FloatArray:
    return float(values) if np.ndim(like) == 0 else values


def eval_Q(ctx: ClosedFormContext, xi: ArrayLike) -> float | FloatArray:
    """Common denominator Q(xi) of the exact solution."""
    p, L, M = ctx.params, ctx.lambda1, ctx.lambda2
    x = np.asarray(xi, dtype=np.float64)
    q = 8 * p.a * p.k**4 * M**2 * (L - 2 * M) * (L + M) ** 2 * (L + 2 * M) ** 3 * (
        p.c1 * _exp(L, x) + 2 * p.k**2 * L**2
    ) - p.b * p.c2**2 * (
        p.c1 * (L**2 - 3 * M * L + 2 * M**2) ** 2 * _exp(L + 2 * M, x)
        + 2 * p.k**2 * L**2 * (L**2 + 3 * M * L + 2 * M**2) ** 2 * _exp(2 * M, x)
    )
    return _output(np.asarray(q, dtype=np.float64), xi)


def _u_numerator(ctx: ClosedFormContext, x: FloatArray) -> FloatArray:
    p, L, M = ctx.params, ctx.lambda1, ctx.lambda2
    a, b, k, c1, c2 = p.a, p.b, p.k, p.c1, p.c2
    first = 64 * c1 * a**2 * k**8 * L**4 * M**4 * (L - 2 * M) * (L + M) ** 2 * (L + 2 * M) ** 4 * _exp(L, x)
    brace = (
        c1 * k**2 * L**2 * (L**2 - 4 * M**2) ** 2 * (L**2 + M**2) * _exp(L + 2 * M, x)
        + c1**2 * M**2 * (L**2 - 3 * L * M + 2 * M**2) ** 2 * _exp(2 * (L + M), x)
        + 4 * k**4 * L**4 * M**2 * (L**2 + 3 * M * L + 2 * M**2) ** 2 * _exp(2 * M, x)
    )
    second = -16 * a * b * k**2 * c2**2 * M**2 * (L + 2 * M) * brace
    third = b**2 * c1 * c2**4 * L**4 * (L - 2 * M) * (L - M) ** 2 * _exp(L + 4 * M, x)
    return np.asarray(
        4 * k**4 * (L - 2 * M) * (L + M) ** 2 * (L + 2 * M) ** 2 * (first + second + third), dtype=np.float64
    )


def eval_U(ctx: ClosedFormContext, xi: ArrayLike) -> float | FloatArray:
    """Exact U(xi): numerator over Q(xi)^2."""
    x = np.asarray(xi, dtype=np.float64)
    q = np.asarray(eval_Q(ctx, x), dtype=np.float64)
    _check_q(q, x)
    return _output(_u_numerator(ctx, x) / q / q, xi)


def eval_V(ctx: ClosedFormContext, xi: ArrayLike) -> float | FloatArray:
    """Exact V(xi): numerator over Q(xi)."""
    p, L, M = ctx.params, ctx.lambda1, ctx.lambda2
    x = np.asarray(xi, dtype=np.float64)
    q = np.asarray(eval_Q(ctx, x), dtype=np.float64)
    _check_q(q, x)
    numerator = (
        8
        * p.a
        * p.c2
        * p.k**4
        * M**2
        * (L - 2 * M)
        * (L + M)
        * (L + 2 * M) ** 2
        * (
            p.c1 * (L**2 - 3 * M * L + 2 * M**2) * _exp(L + M, x)
            + 2 * p.k**2 * L**2 * (L**2 + 3 * M * L + 2 * M**2) * _exp(M, x)
        )
    )
    return _output(np.asarray(numerator / q, dtype=np.float64), xi)


def eval_Q_generating(ctx: ClosedFormContext, xi: ArrayLike, eps: ArrayLike) -> float | FloatArray:
    """Q(xi, eps); equals Q(xi) at eps = 1."""
    p, L, M = ctx.params, ctx.lambda1, ctx.lambda2
    x, e = np.broadcast_arrays(np.asarray(xi, dtype=np.float64), np.asarray(eps, dtype=np.float64))
    q = 8 * p.a * p.k**4 * M**2 * (L - 2 * M) * (L + M) ** 2 * (L + 2 * M) ** 3 * (
        e * p.c1 * _exp(L, x) + 2 * p.k**2 * L**2
    ) - p.b * e**2 * p.c2**2 * (
        e * p.c1 * (L**2 - 3 * M * L + 2 * M**2) ** 2 * _exp(L + 2 * M, x)
        + 2 * p.k**2 * L**2 * (L**2 + 3 * M * L + 2 * M**2) ** 2 * _exp(2 * M, x)
    )
    scalar = np.ndim(xi) == 0 and np.ndim(eps) == 0
    return float(q) if scalar else np.asarray(q, dtype=np.float64)


def eval_generating(
    ctx: ClosedFormContext, xi: ArrayLike, eps: ArrayLike
) -> tuple[float, float] | tuple[FloatArray, FloatArray]:
    """Generating functions U(xi, eps), V(xi, eps) whose eps-Taylor coefficients are the series corrections.

    Raises:
        VanishingDenominatorError: If Q(xi, eps) vanishes
    """
    p, L, M = ctx.params, ctx.lambda1, ctx.lambda2
    a, b, k, c1, c2 = p.a, p.b, p.k, p.c1, p.c2
    x, e = np.broadcast_arrays(np.asarray(xi, dtype=np.float64), np.asarray(eps, dtype=np.float64))
    q = np.asarray(eval_Q_generating(ctx, x, e), dtype=np.float64)
    _check_q(q, x)

    first = 64 * c1 * a**2 * k**8 * L**4 * M**4 * (L - 2 * M) * (L + M) ** 2 * (L + 2 * M) ** 4 * _exp(L, x)
    brace = (
        e * c1 * k**2 * L**2 * (L**2 - 4 * M**2) ** 2 * (L**2 + M**2) * _exp(L + 2 * M, x)
        + e**2 * c1**2 * M**2 * (L**2 - 3 * L * M + 2 * M**2) ** 2 * _exp(2 * (L + M), x)
        + 4 * k**4 * L**4 * M**2 * (L**2 + 3 * M * L + 2 * M**2) ** 2 * _exp(2 * M, x)
    )
    second = -16 * e * a * b * k**2 * c2**2 * M**2 * (L + 2 * M) * brace
    third = e**4 * b**2 * c1 * c2**4 * L**4 * (L - 2 * M) * (L - M) ** 2 * _exp(L + 4 * M, x)
    u = 4 * k**4 * (L - 2 * M) * (L + M) ** 2 * (L + 2 * M) ** 2 * (first + second + third) / q / q

    v = (
        8
        * a
        * c2
        * k**4
        * M**2
        * (L - 2 * M)
        * (L + M)
        * (L + 2 * M) ** 2
        * (
            e * c1 * (L**2 - 3 * M * L + 2 * M**2) * _exp(L + M, x)
            + 2 * k**2 * L**2 * (L**2 + 3 * M * L + 2 * M**2) * _exp(M, x)
        )
        / q
    )
    if np.ndim(xi) == 0 and np.ndim(eps) == 0:
        return float(u), float(v)
    return np.asarray(u, dtype=np.float64), np.asarray(v, dtype=np.float64)


def q_expsum(ctx: ClosedFormContext) -> ExpSum:
    """Q as a four-term lattice sum. All coefficients of one sign certify that Q never vanishes."""
    p, L = ctx.params, ctx.lambda1
    g = ctx.q_prefactor
    return ExpSum(
        ctx.lattice,
        {
            (0, 0): 2 * g * p.k**2 * L**2,
            (1, 0): g * p.c1,
            (0, 2): -2 * p.b * p.c2**2 * p.k**2 * L**2 * ctx.beta_factor**2,
            (1, 2): -p.b * p.c2**2 * p.c1 * ctx.alpha_factor**2,
        },
    )


def q_epsilon_coefficients(ctx: ClosedFormContext, xi: float) -> tuple[float, float, float, float]:
    """Coefficients (eps^3, eps^2, eps^1, eps^0) of Q(xi, eps), which is cubic in eps."""
    p, L, M = ctx.params, ctx.lambda1, ctx.lambda2
    g = ctx.q_prefactor
    x = np.asarray(xi, dtype=np.float64)
    e1 = float(_exp(L, x))
    e2sq = float(_exp(2 * M, x))
    e1e2sq = float(_exp(L + 2 * M, x))
    return (
        -p.b * p.c2**2 * p.c1 * ctx.alpha_factor**2 * e1e2sq,
        -2 * p.b * p.c2**2 * p.k**2 * L**2 * ctx.beta_factor**2 * e2sq,
        g * p.c1 * e1,
        2 * g * p.k**2 * L**2,
    )


def taylor_coefficients(
    ctx: ClosedFormContext, xi: float, order: int = 3, h: float = TAYLOR_STEP
) -> list[tuple[float, float]]:
    """eps-Taylor coefficients at eps = 0 of (U(xi, eps), V(xi, eps)) up to ``order``.

    Uses central differences in eps with one Richardson halving.
    """

    def component(index: int) -> list[float]:
        def g(eps: FloatArray) -> FloatArray:
            return eval_generating(ctx, np.full_like(eps, xi), eps)[index]

        return [float(central_derivative(g, 0.0, n, h)) / math.factorial(n) for n in range(order + 1)]

    return list(zip(component(0), component(1), strict=True))


def ode_step(params: Params) -> float:
    """Finite-difference step in xi used by the ODE residual."""
    return ODE_STEP_SCALE / max(params.lambda1, params.lambda2)


def ode_terms_of(params: Params, u: VectorFunction, v: VectorFunction, xi: ArrayLike) -> tuple[FloatArray, FloatArray]:
    """Left-hand-side terms of both equations for any vectorized U and V, stacked on the last axis."""
    p = params
    x = np.asarray(xi, dtype=np.float64)
    h = ode_step(p)
    try:
        u0, u1, u3 = (central_derivative(u, x, n, h) for n in (0, 1, 3))
        v0, v1, v3 = (central_derivative(v, x, n, h) for n in (0, 1, 3))
    except VanishingDenominatorError as e:
        raise StencilDomainError(f"Derivative stencil touches a zero of Q: {e}", **e.details) from e

    first = np.stack(
        [u3, -p.lambda1**2 * u1, 6 / p.k**2 * u0 * u1, -2 * p.b / (p.a * p.k**2) * v0 * v1], axis=-1
    )
    second = np.stack([v3, -p.lambda2**2 * v1, 3 / p.k**2 * u0 * v1], axis=-1)
    return first, second


def ode_terms(ctx: ClosedFormContext, xi: ArrayLike) -> tuple[FloatArray, FloatArray]:
    """Individual left-hand-side terms of both equations for the exact solution."""

    def u(points: FloatArray) -> FloatArray:
        return np.asarray(eval_U(ctx, points), dtype=np.float64)

    def v(points: FloatArray) -> FloatArray:
        return np.asarray(eval_V(ctx, points), dtype=np.float64)

    return ode_terms_of(ctx.params, u, v, xi)


def ode_term_floor(params: Params, u: FloatArray, v: FloatArray) -> tuple[FloatArray, FloatArray]:
    """Size of each equation's terms if every xi-derivative scaled U and V by the fastest root.

    Residuals are measured against at least this size, so on flat stretches of a
    profile (all derivatives near zero) stencil roundoff is not read as a residual.
    """
    p = params
    lam = max(p.lambda1, p.lambda2)
    first = lam * np.maximum.reduce(
        [lam**2 * np.abs(u), 6 / p.k**2 * u**2, 2 * abs(p.b) / (p.a * p.k**2) * v**2]
    )
    second = lam * np.maximum(lam**2 * np.abs(v), 3 / p.k**2 * np.abs(u * v))
    return np.asarray(first, dtype=np.float64), np.asarray(second, dtype=np.float64)


def normalized_residual(terms: FloatArray, floor: ArrayLike = 0.0) -> FloatArray:
    """Sum of terms divided by the largest absolute term, or by ``floor`` where that is larger.

    0 where the divisor is 0.
    """
    scale = np.maximum(np.max(np.abs(terms), axis=-1), np.asarray(floor, dtype=np.float64))
    total = np.sum(terms, axis=-1)
    safe = np.where(scale > 0.0, scale, 1.0)
    return np.asarray(np.where(scale > 0.0, total / safe, 0.0), dtype=np.float64)


def ode_residual(ctx: ClosedFormContext, xi: ArrayLike) -> tuple[float, float] | tuple[FloatArray, FloatArray]:
    """Normalized residuals of both ODEs for the exact solution, derivatives by finite differences.

    Each residual is divided by the larger of its largest term and ``ode_term_floor``.
    """
    first, second = ode_terms(ctx, xi)
    x = np.asarray(xi, dtype=np.float64)
    u = np.asarray(eval_U(ctx, x), dtype=np.float64)
    v = np.asarray(eval_V(ctx, x), dtype=np.float64)
    floor1, floor2 = ode_term_floor(ctx.params, u, v)
    r1, r2 = normalized_residual(first, floor1), normalized_residual(second, floor2)
    if np.ndim(xi) == 0:
        return float(r1), float(r2)
    return r1, r2


def profile(ctx: ClosedFormContext, xi_lo: float, xi_hi: float, n: int) -> CurveSample:
    """Sample (xi, U, V) on a uniform grid."""
    xi = np.linspace(xi_lo, xi_hi, n)
    log.debug(f"Sampling profile on [{xi_lo:.6g}, {xi_hi:.6g}] with {n} points")
    return CurveSample.from_columns({"xi": xi, "U": eval_U(ctx, xi), "V": eval_V(ctx, xi)})


def profile_window(params: Params) -> tuple[float, float]:
    """Symmetric window kept clear of the overflow guard by the largest numerator exponent."""
    half = 600.0 / (2 * params.lambda1 + 4 * params.lambda2)
    return -half, half
