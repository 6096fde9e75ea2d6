"""Boundedness checks for the exact solution.

The solution stays bounded when its denominator Q(xi) never vanishes. For
c1 > 0 the sign conditions on (c2, a, b, k) (and on c for the surfaces in
(x, t)) give Q < 0 in cases I and II and Q > 0 in case III.
"""

import math
from typing import NamedTuple

import numpy as np
from numpy.typing import NDArray
from scipy.signal import find_peaks

from rcamkdv import log
from rcamkdv.algebra.expsum import MAX_EXPONENT, RESONANCE_SCALE, Lattice
from rcamkdv.bounds.models import BoundsReport, CaseLabel, QSign, Subcase, TailFit, verdict_label
from rcamkdv.errors import (
    ClassificationDisagreementError,
    EvaluationRangeError,
    InputError,
    InsufficientSamplesError,
    UnclassifiableCaseError,
)
from rcamkdv.exact.closed_form import ClosedFormContext, eval_Q, profile, profile_window, q_expsum
from rcamkdv.params import Params, Tolerances
from rcamkdv.wave.samples import CurveSample

FloatArray = NDArray[np.float64]

SCAN_POINTS = 400
SCAN_HALF_WIDTH = 80.0
PROFILE_POINTS = 4001
NEAR_ZERO = 1e-3
REFINEMENT = 3
FIT_FLOOR = 1e-14
FIT_RESIDUAL = 0.1
THEOREMS = (1, 2)


class QScan(NamedTuple):
    sign: QSign
    min_abs: float
    xi_lo: float
    xi_hi: float
    notes: list[str]


def classify_case(params: Params, resonance_scale: float = RESONANCE_SCALE) -> CaseLabel:
    """Case I, II or III from the ordering of lambda1 and lambda2, cross-checked against ``a``.

    Raises:
        UnclassifiableCaseError: If lambda2 sits on lambda1 or lambda1/2
        ClassificationDisagreementError: If the ordering and the ``a`` thresholds disagree
    """
    lambda1, lambda2 = params.lambda1, params.lambda2
    tau = Lattice(lambda1, lambda2).resonance_threshold(resonance_scale)
    if abs(lambda2 - lambda1) < tau or abs(lambda2 - lambda1 / 2.0) < tau:
        raise UnclassifiableCaseError(
            f"lambda2={lambda2:.17g} is on a case boundary of lambda1={lambda1:.17g}",
            lambda1=lambda1,
            lambda2=lambda2,
        )

    if lambda2 > lambda1:
        by_roots = CaseLabel.II
    elif lambda2 > lambda1 / 2.0:
        by_roots = CaseLabel.I
    else:
        by_roots = CaseLabel.III

    by_a = CaseLabel(params.case_hint)
    if by_a is not by_roots:
        raise ClassificationDisagreementError(
            f"Root ordering gives case {by_roots}, a={params.a:.17g} gives case {by_a}",
            by_roots=by_roots.value,
            by_a=by_a.value,
        )
    return by_roots


def check_conditions(params: Params, theorem: int = 1) -> Subcase:
    """Sub-case (a)-(d) whose strict sign conditions hold, or ``Subcase.NONE``.

    Every sub-case needs c1 > 0 and a > 0, b > 0 in cases I/II and b < 0 in case III.
    c2 > 0 selects (a)/(b), c2 < 0 selects (c)/(d); k < 0 selects (a)/(c), k > 0 selects (b)/(d).
    Theorem 2 also requires c > 0 with k < 0 and c < 0 with k > 0.
    """
    if theorem not in THEOREMS:
        raise InputError(f"Unknown theorem {theorem}; choose 1 or 2", theorem=theorem)
    p = params
    case = classify_case(p)
    b_ok = p.b < 0.0 if case is CaseLabel.III else p.b > 0.0
    if not (p.c1 > 0.0 and p.a > 0.0 and b_ok) or p.c2 == 0.0:
        return Subcase.NONE
    if theorem == 2 and not ((p.k < 0.0 and p.c > 0.0) or (p.k > 0.0 and p.c < 0.0)):
        return Subcase.NONE

    if p.c2 > 0.0:
        return Subcase.A if p.k < 0.0 else Subcase.B
    return Subcase.C if p.k < 0.0 else Subcase.D


def boundary_notes(params: Params) -> list[str]:
    """Notes for sign conditions that fail only because a value sits exactly on zero."""
    return [
        f"{name} = 0 lies on a condition boundary; conditions are strict"
        for name in ("c1", "c2", "b")
        if getattr(params, name) == 0.0
    ]


def q_certificate(params: Params) -> QSign:
    """Sign shared by all four lattice coefficients of Q, or ``mixed``."""
    coefficients = [c for _, c in q_expsum(ClosedFormContext(params)).items()]
    if coefficients and all(c > 0.0 for c in coefficients):
        return QSign.POSITIVE
    if coefficients and all(c < 0.0 for c in coefficients):
        return QSign.NEGATIVE
    return QSign.MIXED


def _refine(xs: FloatArray, suspects: FloatArray) -> FloatArray:
    extra = []
    for i in np.flatnonzero(suspects):
        lo = xs[max(i - 1, 0)]
        hi = xs[min(i + 1, len(xs) - 1)]
        extra.append(np.linspace(lo, hi, 2 * REFINEMENT + 1))
    return np.unique(np.concatenate([xs, *extra]))


def scan_Q(params: Params, xi_lo: float, xi_hi: float, n: int = SCAN_POINTS) -> QScan:
    """Sign of Q over [xi_lo, xi_hi] from ``n`` uniform samples, refined 3x around near-zeros.

    ``min_abs`` is min|Q| / max|Q| over all samples. An upper end past the overflow
    guard is pulled back to 700 / (lambda1 + 2 lambda2) and reported in ``notes``.

    Raises:
        InsufficientSamplesError: If ``n`` < 100
        EvaluationRangeError: If the whole range lies past the overflow guard
    """
    if n < 100:
        raise InsufficientSamplesError(f"scan_Q needs at least 100 points, got {n}", n=n)
    notes: list[str] = []
    # slightly inside the guard so the product exponent * xi cannot round past it
    limit = MAX_EXPONENT / (params.lambda1 + 2.0 * params.lambda2) * (1.0 - 1e-12)
    if xi_hi > limit:
        if xi_lo >= limit:
            raise EvaluationRangeError(f"Scan range starts past the overflow guard at xi={limit:.6g}", xi=xi_lo)
        notes.append(f"scan upper end {xi_hi:.6g} shrunk to {limit:.6g} to stay inside the exponent range")
        log.debug(notes[-1])
        xi_hi = limit

    ctx = ClosedFormContext(params)
    xs = np.linspace(xi_lo, xi_hi, n)
    q = np.asarray(eval_Q(ctx, xs), dtype=np.float64)
    scale = float(np.max(np.abs(q)))
    crossings = np.zeros_like(q, dtype=bool)
    crossings[1:] |= np.sign(q[1:]) != np.sign(q[:-1])
    suspects = crossings | (np.abs(q) < NEAR_ZERO * scale)
    if np.any(suspects):
        xs = _refine(xs, suspects)
        q = np.asarray(eval_Q(ctx, xs), dtype=np.float64)
        scale = float(np.max(np.abs(q)))
        log.debug(f"Refined Q scan around {int(np.sum(suspects))} near-zero samples")

    if np.all(q > 0.0):
        sign = QSign.POSITIVE
    elif np.all(q < 0.0):
        sign = QSign.NEGATIVE
    else:
        sign = QSign.MIXED
    min_abs = float(np.min(np.abs(q)) / scale) if scale > 0.0 else 0.0
    return QScan(sign, min_abs, float(xi_lo), float(xi_hi), notes)


def _values(curve: CurveSample, column: str | None) -> FloatArray:
    return curve.column(column) if column else np.asarray(curve.rows[:, -1])


def count_humps(curve: CurveSample, prominence: float = 0.05, column: str | None = None) -> int:
    """Local maxima of |value| whose prominence exceeds ``prominence`` times the global max of |value|.

    Raises:
        InsufficientSamplesError: If the curve has fewer than 3 samples
    """
    if len(curve) < 3:
        raise InsufficientSamplesError(f"Counting humps needs at least 3 samples, got {len(curve)}")
    magnitude = np.abs(_values(curve, column))
    peak = float(np.max(magnitude))
    if peak == 0.0:
        return 0
    _, properties = find_peaks(magnitude, prominence=(None, None))
    return int(np.sum(properties["prominences"] > prominence * peak))


def tail_bounds(curve: CurveSample, level: float = 1e-4, column: str | None = None) -> tuple[float, float]:
    """(center, L) such that |value| < level * max|value| outside [center - L, center + L]."""
    xs = curve.abscissa
    magnitude = np.abs(_values(curve, column))
    peak = float(np.max(magnitude)) if len(magnitude) else 0.0
    if peak == 0.0:
        return float(np.mean(xs)) if len(xs) else 0.0, 0.0
    inside = np.flatnonzero(magnitude >= level * peak)
    lo, hi = float(xs[inside[0]]), float(xs[inside[-1]])
    return (lo + hi) / 2.0, (hi - lo) / 2.0


def _fit_tail(distance: FloatArray, magnitude: FloatArray, peak: float) -> TailFit:
    """Decay verdict for one tail, samples ordered by increasing distance from the body."""
    if not np.any(magnitude > 0.0):
        return TailFit(ok=True, rate=math.inf, saturated=True)
    monotone = bool(np.all(np.diff(magnitude) <= 0.0))
    fit = magnitude >= FIT_FLOOR * peak
    if np.sum(fit) < 3:
        fit = magnitude > 0.0
    if np.sum(fit) < 3:
        return TailFit(ok=monotone, rate=math.inf, saturated=True)

    slope, intercept = np.polyfit(distance[fit], np.log(magnitude[fit]), 1)
    residual = np.log(magnitude[fit]) - (slope * distance[fit] + intercept)
    rms = float(np.sqrt(np.mean(residual**2)))
    rate = 0.0 - float(slope)
    ok = rate > 0.0 and bool(magnitude[-1] < magnitude[0]) and monotone and rms < FIT_RESIDUAL
    return TailFit(ok=ok, rate=rate)


def tail_fits(
    curve: CurveSample, L: float, center: float = 0.0, column: str | None = None
) -> tuple[TailFit, TailFit]:
    """Left and right tail verdicts outside [center - L, center + L]."""
    xs = curve.abscissa
    magnitude = np.abs(_values(curve, column))
    left = xs <= center - L
    right = xs >= center + L
    if np.sum(left) < 3 or np.sum(right) < 3:
        raise InsufficientSamplesError(
            f"Curve must extend beyond center +/- L with 3 samples per tail (L={L:.6g}, center={center:.6g})"
        )
    peak = float(np.max(magnitude))
    left_order = np.argsort(-xs[left])
    right_order = np.argsort(xs[right])
    return (
        _fit_tail((center - xs[left])[left_order], magnitude[left][left_order], peak),
        _fit_tail((xs[right] - center)[right_order], magnitude[right][right_order], peak),
    )


def tail_decay(
    curve: CurveSample, L: float, center: float = 0.0, column: str | None = None
) -> tuple[bool, bool, float, float]:
    """(left_ok, right_ok, sigma_left, sigma_right) for monotone exponential decay outside [center - L, center + L].

    A tail passes when the least-squares slope of log|value| against distance is
    negative, |value| never increases outward, and the fit's RMS residual is below 0.1.
    A tail that underflows to exact zero passes with rate ``inf``.
    """
    left, right = tail_fits(curve, L, center, column)
    return left.ok, right.ok, float(left.rate or 0.0), float(right.rate or 0.0)


def _json_rate(fit: TailFit) -> float | None:
    return None if fit.saturated or fit.rate is None or math.isinf(fit.rate) else fit.rate


def build_report(
    params: Params,
    theorem: int = 1,
    tolerances: Tolerances | None = None,
    label: str = "",
    expected: str = "none",
) -> BoundsReport:
    """Run every boundedness check for one parameter set."""
    tol = tolerances or Tolerances()
    case_label = classify_case(params, tol.resonance)
    subcase = check_conditions(params, theorem)
    notes = boundary_notes(params)

    ctx = ClosedFormContext(params)
    lo, hi = profile_window(params)
    curve = profile(ctx, lo, hi, PROFILE_POINTS)
    curve = CurveSample(curve.header, curve.rows, label)
    u_curve, v_curve = curve.select("U"), curve.select("V")

    center_xi = float(curve.abscissa[int(np.argmax(np.abs(u_curve.column("U"))))])
    half_width = SCAN_HALF_WIDTH / params.lambda2
    scan = scan_Q(params, center_xi - half_width, center_xi + half_width)
    notes.extend(scan.notes)

    u_center, u_half = tail_bounds(u_curve, tol.tail_level)
    v_center, v_half = tail_bounds(v_curve, tol.tail_level)
    u_tails = tail_fits(u_curve, u_half, u_center)
    v_tails = tail_fits(v_curve, v_half, v_center)

    certificate = q_certificate(params)
    verdict = verdict_label(case_label, subcase)
    if subcase is not Subcase.NONE and scan.sign is QSign.MIXED:
        notes.append("sub-case conditions hold but the scanned Q changes sign")
    matches = verdict == expected and not (subcase is not Subcase.NONE and scan.sign is QSign.MIXED)

    return BoundsReport(
        label=label,
        theorem=theorem,
        case_label=case_label,
        subcase=subcase,
        verdict=verdict,
        expected=expected,
        matches_expected=matches,
        q_sign=scan.sign,
        q_min_abs=scan.min_abs,
        q_certificate=certificate,
        humps_U=count_humps(u_curve, tol.prominence),
        humps_V=count_humps(v_curve, tol.prominence),
        prominence=tol.prominence,
        tail_ok=(u_tails[0].ok, u_tails[1].ok),
        tail_rates_U=(_json_rate(u_tails[0]), _json_rate(u_tails[1])),
        tail_ok_V=(v_tails[0].ok, v_tails[1].ok),
        tail_rates_V=(_json_rate(v_tails[0]), _json_rate(v_tails[1])),
        scan_range=(scan.xi_lo, scan.xi_hi),
        notes=notes,
    )
