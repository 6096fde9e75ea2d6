"""Rapidly convergent series iteration for the reduced coupled KdV system.

Both equations are written as O_i[X_i] = N_i with O_i f = f''' - lambda_i^2 f'
and the nonlinearities moved to the right side:

    N1 = -(6/k^2) U U' + (2b/(a k^2)) V V',    N2 = -(3/k^2) U V'.

Starting from the decaying leading term (c1 e^{lambda1 xi}, c2 e^{lambda2 xi}),
each order applies the inverse operator to the Adomian polynomial of the
previous orders. Both nonlinearities are bilinear, so the Adomian polynomials
are Cauchy convolutions of the corrections.
"""

import math
from dataclasses import dataclass
from enum import StrEnum
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import brentq

from rcamkdv import log
from rcamkdv.algebra.expsum import RESONANCE_SCALE, ExpSum, Lattice, sum_all
from rcamkdv.errors import InputError, IterationCapError, ResonanceError, UnsupportedLeadingCaseError
from rcamkdv.exact.closed_form import (
    ClosedFormContext,
    eval_U,
    eval_V,
    normalized_residual,
    ode_terms_of,
    q_epsilon_coefficients,
)
from rcamkdv.params import Params

DEFAULT_MAX_ORDER = 16
CONVERGENT_RATIO = 0.5
PROBE_RATIO = 0.05
MAX_BRACKET_STEPS = 4096


class LeadingCase(StrEnum):
    """Sign pattern of the operator roots, which fixes the decaying leading term."""

    MIXED = "mixed"
    POSITIVE = "positive"
    NEGATIVE = "negative"


Correction = tuple[ExpSum, ExpSum]


@dataclass(frozen=True)
class SeriesState:
    """Correction terms (U_n, V_n) for n = 0..N."""

    params: Params
    corrections: tuple[Correction, ...]

    @property
    def order(self) -> int:
        return len(self.corrections) - 1

    @property
    def lattice(self) -> Lattice:
        return Lattice(self.params.lambda1, self.params.lambda2)

    def partial_sums(self, upto: int) -> Correction:
        """S_upto as a pair of ExpSums."""
        if not 0 <= upto <= self.order:
            raise InputError(f"Partial sum order {upto} outside 0..{self.order}", upto=upto)
        kept = self.corrections[: upto + 1]
        return sum_all(self.lattice, (u for u, _ in kept)), sum_all(self.lattice, (v for _, v in kept))

    def to_dict(self) -> dict[str, Any]:
        return {
            "params": self.params.model_dump(),
            "lambda1": self.params.lambda1,
            "lambda2": self.params.lambda2,
            "order": self.order,
            "corrections": [
                {"n": n, "U": u.to_dict()["terms"], "V": v.to_dict()["terms"]}
                for n, (u, v) in enumerate(self.corrections)
            ],
        }


def lattice_of(params: Params) -> Lattice:
    return Lattice(params.lambda1, params.lambda2)


def leading_term(params: Params, case: LeadingCase = LeadingCase.POSITIVE) -> Correction:
    """Leading term vanishing at xi -> -inf: U0 = c1 e^{lambda1 xi}, V0 = c2 e^{lambda2 xi}."""
    if case is not LeadingCase.POSITIVE:
        raise UnsupportedLeadingCaseError(
            f"Leading term for {case.value} roots is not available; both roots of this system are positive",
            case=case.value,
        )
    lattice = lattice_of(params)
    return ExpSum.monomial(lattice, (1, 0), params.c1), ExpSum.monomial(lattice, (0, 1), params.c2)


def _convolve(first: list[ExpSum], second: list[ExpSum], m: int) -> ExpSum:
    lattice = first[0].lattice
    return sum_all(lattice, (first[j].mul(second[m - j].diff()) for j in range(m + 1)))


def adomian_delta(state: SeriesState, m: int) -> Correction:
    """Adomian polynomials (Delta1_m, Delta2_m) of the right-hand sides.

    Raises:
        InputError: If corrections 0..m are not all present
    """
    if not 0 <= m <= state.order:
        raise InputError(f"Adomian polynomial of order {m} needs corrections 0..{m}; have 0..{state.order}", m=m)
    p = state.params
    us = [u for u, _ in state.corrections]
    vs = [v for _, v in state.corrections]
    delta1 = _convolve(us, us, m).scale(-6.0 / p.k**2).add(_convolve(vs, vs, m).scale(2.0 * p.b / (p.a * p.k**2)))
    delta2 = _convolve(us, vs, m).scale(-3.0 / p.k**2)
    return delta1, delta2


def iterate(
    params: Params,
    n: int,
    max_order: int = DEFAULT_MAX_ORDER,
    resonance_scale: float = RESONANCE_SCALE,
) -> SeriesState:
    """Run ``n`` iterations: (U_{j+1}, V_{j+1}) = (O1^{-1} Delta1_j, O2^{-1} Delta2_j).

    Raises:
        IterationCapError: If ``n`` exceeds ``max_order``
        ResonanceError: With the failing order attached
    """
    if n < 0:
        raise InputError(f"Number of iterations must be nonnegative, got {n}")
    if n > max_order:
        raise IterationCapError(f"{n} iterations exceed the cap of {max_order}", n=n, max_order=max_order)

    state = SeriesState(params, (leading_term(params),))
    for j in range(n):
        delta1, delta2 = adomian_delta(state, j)
        try:
            u_next = delta1.apply_inverse_op(params.lambda1, resonance_scale)
            v_next = delta2.apply_inverse_op(params.lambda2, resonance_scale)
        except ResonanceError as e:
            raise ResonanceError(f"Order {j + 1}: {e}", order=j + 1, **e.details) from e
        state = SeriesState(params, (*state.corrections, (u_next, v_next)))
        log.debug(f"Order {j + 1}: {len(u_next)} U terms, {len(v_next)} V terms")
    return state


def partial_sum(state: SeriesState, upto: int, xi: float) -> tuple[float, float]:
    """(sum of U_n(xi), sum of V_n(xi)) for n = 0..upto."""
    if not 0 <= upto <= state.order:
        raise InputError(f"Partial sum order {upto} outside 0..{state.order}", upto=upto)
    u = 0.0
    v = 0.0
    for u_n, v_n in state.corrections[: upto + 1]:
        u += u_n.eval(xi)
        v += v_n.eval(xi)
    return u, v


def series_residual(state: SeriesState, upto: int, xi: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Normalized residuals of both reduced ODEs for the partial sum S_upto, derivatives by finite differences."""
    u, v = state.partial_sums(upto)
    first, second = ode_terms_of(state.params, u.evaluate, v.evaluate, xi)
    return normalized_residual(first), normalized_residual(second)


def convergence_ratio(params: Params, xi: float) -> float:
    """Ratio rho(xi) = 1 / (smallest |eps| at which Q(xi, eps) vanishes).

    The eps-series of the generating functions converges at eps = 1 when rho < 1.
    Returns 0 when Q(xi, eps) has no finite root.
    """
    coefficients = q_epsilon_coefficients(ClosedFormContext(params), xi)
    roots = np.roots(coefficients)
    if roots.size == 0:
        return 0.0
    return float(1.0 / np.min(np.abs(roots)))


def convergence_bound(params: Params, xi: float) -> float:
    """Two-term estimate of the ratio from the leading exponentials of Q.

    max(|c1| e^{lambda1 xi} / (2 k^2 lambda1^2), |b| c2^2 e^{2 lambda2 xi} / |G|) with G the prefactor of Q.
    It lacks the (lambda1 + lambda2)^2 (lambda1 + 2 lambda2)^2 weight of the second bracket, so it is
    reported next to ``convergence_ratio`` and never used to decide convergence.
    """
    p, L, M = params, params.lambda1, params.lambda2
    first = abs(p.c1) * math.exp(L * xi) / (2 * p.k**2 * L**2)
    second = (
        abs(p.b)
        * p.c2**2
        * math.exp(2 * M * xi)
        / abs(8 * p.a * p.k**4 * M**2 * (L - 2 * M) * (L + M) ** 2 * (L + 2 * M) ** 3)
    )
    return max(first, second)


def is_convergent(params: Params, xi: float, threshold: float = CONVERGENT_RATIO) -> bool:
    return convergence_ratio(params, xi) < threshold


def xi_at_ratio(params: Params, ratio: float) -> float:
    """A point where the convergence ratio equals ``ratio``.

    The search brackets downward from the point where c1 e^{lambda1 xi} = 2 k^2 lambda1^2 and finishes with brentq.
    """
    if params.c1 == 0.0 and params.c2 == 0.0:
        raise InputError("The zero seed converges everywhere; no probe point is defined")
    step = 1.0 / max(params.lambda1, params.lambda2)
    anchor = math.log(2 * params.k**2 * params.lambda1**2 / abs(params.c1)) / params.lambda1 if params.c1 else 0.0

    def excess(xi: float) -> float:
        return math.log(max(convergence_ratio(params, xi), 1e-300)) - math.log(ratio)

    hi = anchor
    for _ in range(MAX_BRACKET_STEPS):
        if excess(hi) >= 0.0:
            break
        hi += step
    else:
        raise InputError(f"No point with convergence ratio {ratio} was found above xi={anchor:.17g}")
    lo = hi - step
    for _ in range(MAX_BRACKET_STEPS):
        if excess(lo) < 0.0:
            break
        hi, lo = lo, lo - step
    else:
        raise InputError(f"No point with convergence ratio {ratio} was found")
    return float(brentq(excess, lo, hi, xtol=1e-12))


def convergence_probes(params: Params, count: int = 5, ratio: float = PROBE_RATIO) -> list[float]:
    """``count`` points spaced by 1/max(lambda) where the convergence ratio is at most ``ratio``."""
    start = xi_at_ratio(params, ratio)
    spacing = 1.0 / max(params.lambda1, params.lambda2)
    probes: list[float] = []
    xi = start - 0.5 * spacing
    while len(probes) < count:
        if convergence_ratio(params, xi) <= ratio:
            probes.append(xi)
        xi -= spacing
    return probes


def convergence_table(state: SeriesState, probes: list[float]) -> list[dict[str, float | int]]:
    """Relative error |S_n - closed form| / |closed form| of U and V for n = 0..N at each probe point."""
    ctx = ClosedFormContext(state.params)
    rows: list[dict[str, float | int]] = []
    for xi in probes:
        exact_u = float(eval_U(ctx, xi))
        exact_v = float(eval_V(ctx, xi))
        for n in range(state.order + 1):
            u, v = partial_sum(state, n, xi)
            rows.append(
                {
                    "xi": xi,
                    "n": n,
                    "rho": convergence_ratio(state.params, xi),
                    "bound": convergence_bound(state.params, xi),
                    "error_U": abs(u - exact_u) / abs(exact_u) if exact_u else abs(u),
                    "error_V": abs(v - exact_v) / abs(exact_v) if exact_v else abs(v),
                }
            )
    return rows
