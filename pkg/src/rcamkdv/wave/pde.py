"""Solution surfaces u(x, t), v(x, t) and residuals of the conformable coupled KdV system

    u_t^(beta) + 6 a u u_x^(alpha) - 2 b v v_x^(alpha) + a u_xxx^(alpha) = 0
    v_t^(beta) + 3 u v_x^(alpha) + v_xxx^(alpha) = 0.
"""

from enum import StrEnum
from typing import Self

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, Field, model_validator

from rcamkdv import log
from rcamkdv.bounds.boundedness import check_conditions
from rcamkdv.bounds.models import Subcase
from rcamkdv.errors import RcamError, StencilDomainError, UnboundedParametersError, VanishingDenominatorError
from rcamkdv.exact.closed_form import (
    ODE_STEP_SCALE,
    ClosedFormContext,
    eval_U,
    eval_V,
    normalized_residual,
    ode_term_floor,
)
from rcamkdv.numerics.stencils import VectorFunction, central_derivative
from rcamkdv.params import Params
from rcamkdv.wave.conformable import conformable_operator, expand_to, xi_of
from rcamkdv.wave.samples import CurveSample

FloatArray = NDArray[np.float64]

STENCIL_FRACTION = 1.0 / 16.0


class ThirdDerivativeReading(StrEnum):
    """How u_xxx^(alpha) is read: three nested T_alpha in x, or T_alpha followed by two ordinary x-derivatives."""

    NESTED = "nested"
    MIXED = "mixed"


class WaveGridSpec(BaseModel):
    """Uniform grid on the open positive quadrant."""

    model_config = ConfigDict(frozen=True)

    x_min: float = Field(gt=0.0)
    x_max: float = Field(gt=0.0)
    t_min: float = Field(gt=0.0)
    t_max: float = Field(gt=0.0)
    nx: int = Field(ge=2)
    nt: int = Field(ge=2)

    @model_validator(mode="after")
    def _check_order(self) -> Self:
        if self.x_max <= self.x_min or self.t_max <= self.t_min:
            raise ValueError("grid bounds must satisfy x_min < x_max and t_min < t_max")
        return self

    def mesh(self) -> tuple[FloatArray, FloatArray]:
        """(x, t) arrays of shape (nt, nx): t varies along rows, x within a row."""
        xs = np.linspace(self.x_min, self.x_max, self.nx)
        ts = np.linspace(self.t_min, self.t_max, self.nt)
        t_grid, x_grid = np.meshgrid(ts, xs, indexing="ij")
        return x_grid, t_grid


def _lambda_max(params: Params) -> float:
    return max(params.lambda1, params.lambda2)


def x_step(params: Params, x: FloatArray) -> FloatArray:
    """Step in x moving xi by about 0.02/max(lambda), capped at x/16."""
    target = ODE_STEP_SCALE * x ** (1.0 - params.alpha) / (_lambda_max(params) * abs(params.k))
    return np.minimum(target, x * STENCIL_FRACTION)


def t_step(params: Params, t: FloatArray) -> FloatArray:
    """Step in t moving xi by about 0.02/max(lambda), capped at t/16."""
    speed = abs(params.c)
    if speed == 0.0:
        return t * STENCIL_FRACTION
    target = ODE_STEP_SCALE * t ** (1.0 - params.beta) / (_lambda_max(params) * speed)
    return np.minimum(target, t * STENCIL_FRACTION)


def _third_x(f: VectorFunction, x: FloatArray, params: Params, reading: ThirdDerivativeReading) -> FloatArray:
    def step(points: FloatArray) -> FloatArray:
        return x_step(params, points)

    operator = conformable_operator(params.alpha, step)
    if reading is ThirdDerivativeReading.NESTED:
        return operator(operator(operator(f)))(x)
    return central_derivative(operator(f), x, 2, step(x))


def pde_terms(
    params: Params,
    x: ArrayLike,
    t: ArrayLike,
    reading: ThirdDerivativeReading = ThirdDerivativeReading.NESTED,
    context: ClosedFormContext | None = None,
) -> tuple[FloatArray, FloatArray]:
    """Individual terms of both equations at (x, t), stacked on the last axis.

    ``context`` supplies the solution (defaults to the exact one for ``params``);
    the equation always uses ``params``.
    """
    ctx = context or ClosedFormContext(params)
    xs, ts = np.broadcast_arrays(np.asarray(x, dtype=np.float64), np.asarray(t, dtype=np.float64))

    def along_x(evaluate: VectorFunction) -> VectorFunction:
        def f(points: FloatArray) -> FloatArray:
            return evaluate(np.asarray(xi_of(params, points, expand_to(ts, points)), dtype=np.float64))

        return f

    def along_t(evaluate: VectorFunction) -> VectorFunction:
        def f(points: FloatArray) -> FloatArray:
            return evaluate(np.asarray(xi_of(params, expand_to(xs, points), points), dtype=np.float64))

        return f

    def u_of(xi: FloatArray) -> FloatArray:
        return np.asarray(eval_U(ctx, xi), dtype=np.float64)

    def v_of(xi: FloatArray) -> FloatArray:
        return np.asarray(eval_V(ctx, xi), dtype=np.float64)

    def x_derivative(f: VectorFunction) -> FloatArray:
        return conformable_operator(params.alpha, lambda p: x_step(params, p))(f)(xs)

    def t_derivative(f: VectorFunction) -> FloatArray:
        return conformable_operator(params.beta, lambda p: t_step(params, p))(f)(ts)

    try:
        xi = np.asarray(xi_of(params, xs, ts), dtype=np.float64)
        u, v = u_of(xi), v_of(xi)
        u_t, v_t = t_derivative(along_t(u_of)), t_derivative(along_t(v_of))
        u_x, v_x = x_derivative(along_x(u_of)), x_derivative(along_x(v_of))
        u_xxx = _third_x(along_x(u_of), xs, params, reading)
        v_xxx = _third_x(along_x(v_of), xs, params, reading)
    except VanishingDenominatorError as e:
        raise StencilDomainError(f"Derivative stencil touches a zero of Q: {e}", **e.details) from e

    p = params
    first = np.stack([u_t, 6 * p.a * u * u_x, -2 * p.b * v * v_x, p.a * u_xxx], axis=-1)
    second = np.stack([v_t, 3 * u * v_x, v_xxx], axis=-1)
    return first, second


def pde_residual(
    params: Params,
    x: ArrayLike,
    t: ArrayLike,
    reading: ThirdDerivativeReading = ThirdDerivativeReading.NESTED,
    context: ClosedFormContext | None = None,
) -> tuple[float, float] | tuple[FloatArray, FloatArray]:
    """Normalized residuals of both equations for the exact traveling wave.

    The divisor is at least ``ode_term_floor`` carried over by the chain rule
    (T_alpha in x is k d/dxi, T_beta in t is c d/dxi), i.e. scaled by a|k|^3 and |k|^3.

    Raises:
        DomainError: If x or t is not positive
        StencilDomainError: If a stencil touches a zero of Q
    """
    first, second = pde_terms(params, x, t, reading, context)
    ctx = context or ClosedFormContext(params)
    xi = np.asarray(xi_of(params, x, t), dtype=np.float64)
    u = np.asarray(eval_U(ctx, xi), dtype=np.float64)
    v = np.asarray(eval_V(ctx, xi), dtype=np.float64)
    floor1, floor2 = ode_term_floor(params, u, v)
    cube = abs(params.k) ** 3
    r1 = normalized_residual(first, params.a * cube * floor1)
    r2 = normalized_residual(second, cube * floor2)
    if np.ndim(x) == 0 and np.ndim(t) == 0:
        return float(r1), float(r2)
    return r1, r2


def _locate_failure(ctx: ClosedFormContext, x: FloatArray, t: FloatArray, error: RcamError) -> RcamError:
    for xp, tp in zip(x.ravel().tolist(), t.ravel().tolist(), strict=True):
        try:
            xi = float(xi_of(ctx.params, xp, tp))
            eval_U(ctx, xi)
            eval_V(ctx, xi)
        except RcamError as e:
            return type(e)(f"At x={xp:.17g}, t={tp:.17g}: {e}", x=xp, t=tp, **e.details)
    return error


def surface(
    params: Params,
    grid: WaveGridSpec,
    require_bounded: bool = True,
    label: str = "",
) -> tuple[CurveSample, CurveSample]:
    """Sample u(x, t) = U(xi(x, t)) and v(x, t) = V(xi(x, t)) over ``grid``.

    Rows are ordered with t outer and x inner.

    Raises:
        UnboundedParametersError: If ``require_bounded`` and no bounded sub-case matches
        VanishingDenominatorError, EvaluationRangeError: With the failing grid point attached
    """
    if require_bounded and check_conditions(params, theorem=2) is Subcase.NONE:
        raise UnboundedParametersError(
            "Parameters satisfy none of the bounded sub-cases; pass require_bounded=False to sample anyway",
            label=label,
        )

    ctx = ClosedFormContext(params)
    x, t = grid.mesh()
    try:
        xi = np.asarray(xi_of(params, x, t), dtype=np.float64)
        u = np.asarray(eval_U(ctx, xi), dtype=np.float64)
        v = np.asarray(eval_V(ctx, xi), dtype=np.float64)
    except RcamError as e:
        raise _locate_failure(ctx, x, t, e) from e

    log.debug(f"Sampled {grid.nt}x{grid.nx} surface {label}".rstrip())
    return (
        CurveSample.from_columns({"x": x, "t": t, "u": u}, label),
        CurveSample.from_columns({"x": x, "t": t, "v": v}, label),
    )
