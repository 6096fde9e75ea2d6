"""Central finite-difference stencils with exact weights and Richardson extrapolation."""

from collections.abc import Callable, Sequence
from fractions import Fraction
from functools import lru_cache

import numpy as np
from numpy.typing import ArrayLike, NDArray

ACCURACY = 8

VectorFunction = Callable[[NDArray[np.float64]], NDArray[np.float64]]


def fornberg_weights(offsets: Sequence[int], derivative: int) -> list[Fraction]:
    """Exact weights of the ``derivative``-th derivative at 0 on integer ``offsets`` (Fornberg's recursion).

    Args:
        offsets: Distinct integer grid offsets
        derivative: Derivative order (must be below ``len(offsets)``)

    Returns:
        One rational weight per offset
    """
    n = len(offsets)
    if derivative >= n:
        raise ValueError(f"{n} points cannot resolve a derivative of order {derivative}")
    c = [[Fraction(0)] * (derivative + 1) for _ in range(n)]
    c[0][0] = Fraction(1)
    c1 = Fraction(1)
    c4 = Fraction(offsets[0])
    for i in range(1, n):
        mn = min(i, derivative)
        c2 = Fraction(1)
        c5 = c4
        c4 = Fraction(offsets[i])
        for j in range(i):
            c3 = Fraction(offsets[i] - offsets[j])
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2
            for k in range(mn, 0, -1):
                c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3
            c[j][0] = c4 * c[j][0] / c3
        c1 = c2
    return [c[j][derivative] for j in range(n)]


def central_offsets(derivative: int, accuracy: int = ACCURACY) -> list[int]:
    """Symmetric offsets giving a central stencil of the requested even accuracy order."""
    if accuracy % 2:
        raise ValueError("Central stencils have even accuracy orders")
    points = 2 * ((derivative + 1) // 2) - 1 + accuracy
    radius = points // 2
    return list(range(-radius, radius + 1))


@lru_cache(maxsize=32)
def central_stencil(derivative: int, accuracy: int = ACCURACY) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Offsets and float weights of the central stencil (cached)."""
    offsets = central_offsets(derivative, accuracy)
    weights = fornberg_weights(offsets, derivative)
    return np.array(offsets, dtype=np.float64), np.array([float(w) for w in weights], dtype=np.float64)


def _apply(
    f: VectorFunction, x: NDArray[np.float64], h: NDArray[np.float64], derivative: int, accuracy: int
) -> NDArray[np.float64]:
    offsets, weights = central_stencil(derivative, accuracy)
    samples = f(x[..., None] + h[..., None] * offsets)
    return np.asarray(samples @ weights / h**derivative, dtype=np.float64)


def central_derivative(
    f: VectorFunction,
    x: ArrayLike,
    derivative: int,
    h: ArrayLike,
    accuracy: int = ACCURACY,
    richardson: bool = True,
) -> NDArray[np.float64]:
    """Central finite-difference derivative of a vectorized function.

    With ``richardson`` the estimates at h and h/2 are combined as
    (2^p D(h/2) - D(h)) / (2^p - 1), p being the accuracy order.

    Args:
        f: Function accepting and returning float arrays of equal shape
        x: Evaluation points
        derivative: Derivative order (0 returns f(x))
        h: Step, scalar or one per point
        accuracy: Even accuracy order of the stencil
        richardson: Apply one Richardson halving
    """
    points = np.asarray(x, dtype=np.float64)
    steps = np.broadcast_to(np.asarray(h, dtype=np.float64), points.shape)
    if derivative == 0:
        return np.asarray(f(points), dtype=np.float64)
    coarse = _apply(f, points, steps, derivative, accuracy)
    if not richardson:
        return coarse
    fine = _apply(f, points, steps / 2.0, derivative, accuracy)
    factor = 2.0**accuracy
    return (factor * fine - coarse) / (factor - 1.0)


def stencil_reach(derivative: int, accuracy: int = ACCURACY) -> int:
    """Largest offset (in steps) a central stencil touches."""
    return len(central_offsets(derivative, accuracy)) // 2
