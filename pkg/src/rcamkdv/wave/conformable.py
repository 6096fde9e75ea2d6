"""Conformable derivative T_alpha f(t) = t^(1-alpha) f'(t) and the traveling-wave variable."""

from collections.abc import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray

from rcamkdv.errors import DomainError, StencilDomainError
from rcamkdv.numerics.stencils import VectorFunction, central_derivative, stencil_reach
from rcamkdv.params import Params

FloatArray = NDArray[np.float64]
StepRule = Callable[[FloatArray], FloatArray]

RELATIVE_STEP = 1.0 / 16.0


def _positive(values: ArrayLike, name: str) -> FloatArray:
    points = np.asarray(values, dtype=np.float64)
    if np.any(points <= 0.0):
        raise DomainError(f"{name} must be positive, got {float(np.min(points)):.17g}", **{name: float(np.min(points))})
    return points


def expand_to(values: FloatArray, like: FloatArray) -> FloatArray:
    """Append unit axes so ``values`` broadcasts against stencil sample arrays built from it."""
    return values.reshape(values.shape + (1,) * (like.ndim - values.ndim))


def relative_step(points: FloatArray) -> FloatArray:
    return points * RELATIVE_STEP


def xi_of(params: Params, x: ArrayLike, t: ArrayLike) -> float | FloatArray:
    """Wave variable xi = (k/alpha) x^alpha + (c/beta) t^beta + xi0.

    Raises:
        DomainError: If any x or t is not positive
    """
    xs = _positive(x, "x")
    ts = _positive(t, "t")
    xi = params.k / params.alpha * xs**params.alpha + params.c / params.beta * ts**params.beta + params.xi0
    if np.ndim(xi) == 0:
        return float(xi)
    return np.asarray(xi, dtype=np.float64)


def _check_reach(points: FloatArray, h: FloatArray, derivative: int) -> None:
    if np.any(points - stencil_reach(derivative) * h <= 0.0):
        raise StencilDomainError(
            "Derivative stencil leaves the positive half-line", point=float(np.min(points)), h=float(np.max(h))
        )


def conformable_derivative(
    f: VectorFunction, t: ArrayLike, alpha: float, h: ArrayLike | None = None
) -> float | FloatArray:
    """T_alpha f(t) = t^(1-alpha) f'(t) with f' from the central stencil.

    Args:
        f: Vectorized function of a positive variable
        t: Evaluation point(s), all positive
        alpha: Order in (0, 1]
        h: Stencil step; defaults to t/16
    """
    points = _positive(t, "t")
    steps = np.broadcast_to(np.asarray(relative_step(points) if h is None else h, dtype=np.float64), points.shape)
    _check_reach(points, steps, 1)
    value = points ** (1.0 - alpha) * central_derivative(f, points, 1, steps)
    return float(value) if np.ndim(t) == 0 else np.asarray(value, dtype=np.float64)


def conformable_derivative_limit(
    f: VectorFunction, t: ArrayLike, alpha: float, eps: ArrayLike | None = None
) -> float | FloatArray:
    """T_alpha f(t) from the defining limit of (f(t + e t^(1-alpha)) - f(t)) / e as e -> 0.

    The limit is the derivative at e = 0 of g(e) = f(t + e t^(1-alpha)), taken with the central stencil.
    The default ``eps`` is t^alpha / 16, which moves t by t/16.
    """
    points = _positive(t, "t")
    scale = points ** (1.0 - alpha)
    steps = np.broadcast_to(
        np.asarray(points**alpha * RELATIVE_STEP if eps is None else eps, dtype=np.float64), points.shape
    )
    _check_reach(points, steps * scale, 1)

    def g(e: FloatArray) -> FloatArray:
        return f(expand_to(points, e) + e * expand_to(scale, e))

    value = central_derivative(g, np.zeros_like(points), 1, steps)
    return float(value) if np.ndim(t) == 0 else np.asarray(value, dtype=np.float64)


def conformable_operator(alpha: float, step: StepRule = relative_step) -> Callable[[VectorFunction], VectorFunction]:
    """T_alpha as a map on vectorized functions, so applications compose.

    ``step`` gives the stencil step at each evaluation point.
    """

    def apply(f: VectorFunction) -> VectorFunction:
        def t_alpha(points: FloatArray) -> FloatArray:
            where = _positive(points, "t")
            steps = step(where)
            _check_reach(where, steps, 1)
            return np.asarray(where ** (1.0 - alpha) * central_derivative(f, where, 1, steps), dtype=np.float64)

        return t_alpha

    return apply
