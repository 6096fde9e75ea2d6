import json
import math

import numpy as np
import pytest

from rcamkdv.algebra.expsum import ExpSum, Lattice, LatticeKey, sum_all
from rcamkdv.errors import InputError, IterationCapError, ResonanceError, UnsupportedLeadingCaseError
from rcamkdv.exact.closed_form import ClosedFormContext, taylor_coefficients
from rcamkdv.params import ParamRow, Params
from rcamkdv.solver import rcam
from rcamkdv.solver.rcam import (
    LeadingCase,
    SeriesState,
    adomian_delta,
    convergence_bound,
    convergence_probes,
    convergence_ratio,
    convergence_table,
    is_convergent,
    iterate,
    leading_term,
    partial_sum,
    series_residual,
    xi_at_ratio,
)
from tests.conftest import TABLE1, TableRows, assert_sums_close, magnitude


def lattice_corrections(p: Params) -> list[tuple[dict[LatticeKey, float], dict[LatticeKey, float]]]:
    """Coefficients of (U_n, V_n), n = 0..3, worked out by hand on the lattice."""
    a, b, k, c1, c2 = p.a, p.b, p.k, p.c1, p.c2
    L, M = p.lambda1, p.lambda2
    return [
        ({(1, 0): c1}, {(0, 1): c2}),
        (
            {(2, 0): -(c1**2) / (k**2 * L**2), (0, 2): b * c2**2 / (a * k**2 * (4 * M**2 - L**2))},
            {(1, 1): -3 * c1 * c2 * M / (k**2 * L * (L + M) * (L + 2 * M))},
        ),
        (
            {
                (3, 0): 3 * c1**3 / (4 * k**4 * L**4),
                (1, 2): 3
                * b
                * c1
                * c2**2
                * (L**2 + 2 * M**2)
                / (2 * a * k**4 * L * M * (L + M) ** 2 * (L**2 - 4 * M**2)),
            },
            {
                (2, 1): 3 * c1**2 * c2 * M / (2 * k**4 * L**3 * (L + M) * (L + 2 * M)),
                (0, 3): b * c2**3 / (8 * a * k**4 * M**2 * (L**2 - 4 * M**2)),
            },
        ),
        (
            {
                (4, 0): -(c1**4) / (2 * k**6 * L**6),
                (2, 2): -3
                * b
                * c1**2
                * c2**2
                * (L**2 + 2 * M**2)
                / (a * k**6 * L**3 * M * (L - 2 * M) * (L + 2 * M) ** 3),
                (0, 4): -(b**2) * c2**4 / (4 * a**2 * k**6 * M**2 * (L**2 - 4 * M**2) ** 2),
            },
            {
                (3, 1): -3 * c1**3 * c2 * M / (4 * k**6 * L**5 * (L + M) * (L + 2 * M)),
                (1, 3): -9
                * b
                * c1
                * c2**3
                * (L**2 + L * M + 2 * M**2)
                / (8 * a * k**6 * L * M * (L + M) ** 2 * (L - 2 * M) * (L + 2 * M) ** 3),
            },
        ),
    ]


def closed_form_corrections(p: Params, xi: float) -> list[tuple[float, float]]:
    """(U_n(xi), V_n(xi)) for n = 1..3 from the closed-form correction formulas."""
    a, b, k, c1, c2 = p.a, p.b, p.k, p.c1, p.c2
    L, M = p.lambda1, p.lambda2
    e1, e2 = math.exp(L * xi), math.exp(M * xi)
    u1 = -math.exp(2 * M * xi) * (a * c1**2 * (L**2 - 4 * M**2) * math.exp(2 * (L - M) * xi) + b * c2**2 * L**2) / (
        a * k**2 * (L**4 - 4 * L**2 * M**2)
    )
    v1 = -3 * c1 * c2 * M * math.exp((L + M) * xi) / (k**2 * L * (L + M) * (L + 2 * M))
    u2 = (
        3
        * c1
        * e1
        * (a * c1**2 * M * (L + M) ** 2 * (L**2 - 4 * M**2) * e1**2 + 2 * b * c2**2 * (L**2 + 2 * M**2) * L**3 * e2**2)
        / (4 * a * k**4 * L**4 * M * (L + M) ** 2 * (L**2 - 4 * M**2))
    )
    v2 = (
        c2
        * e2
        * (12 * a * c1**2 * (L - 2 * M) * M**3 * e1**2 + b * c2**2 * (L + M) * L**3 * e2**2)
        / (8 * a * k**4 * L**3 * M**2 * (L + M) * (L**2 - 4 * M**2))
    )
    u3 = -(
        2 * a**2 * c1**4 * (L - 2 * M) ** 2 * M**2 * (L + 2 * M) ** 3 * e1**4
        + 12 * a * b * c1**2 * c2**2 * M * (L**3 - 2 * M * L**2 + 2 * M**2 * L - 4 * M**3) * L**3 * e1**2 * e2**2
        + b**2 * c2**4 * (L + 2 * M) * L**6 * e2**4
    ) / (4 * a**2 * k**6 * L**6 * (L - 2 * M) ** 2 * M**2 * (L + 2 * M) ** 3)
    v3 = (
        -3
        * c1
        * c2
        * e1
        * e2
        * (
            2 * a * c1**2 * M**2 * (L + 2 * M) ** 2 * (L**2 - L * M - 2 * M**2) * e1**2
            + 3 * b * c2**2 * (L**2 + M * L + 2 * M**2) * L**4 * e2**2
        )
        / (8 * a * k**6 * L**5 * (L - 2 * M) * M * (L + M) ** 2 * (L + 2 * M) ** 3)
    )
    return [(u1, v1), (u2, v2), (u3, v3)]


def epsilon_coefficient_of_nonlinearity(state: SeriesState, m: int) -> tuple[ExpSum, ExpSum]:
    """Coefficient of eps^m in (N1, N2) evaluated on sum_j eps^j (U_j, V_j), j <= m.

    Both right-hand sides are evaluated on whole truncated sums at 2m + 1 Chebyshev nodes in eps;
    the coefficients of each lattice key are then recovered by solving the Vandermonde system.
    """
    p = state.params
    lattice = state.lattice
    nodes = np.cos(np.pi * (np.arange(2 * m + 1) + 0.5) / (2 * m + 1))
    samples1: list[ExpSum] = []
    samples2: list[ExpSum] = []
    for eps in nodes:
        kept = state.corrections[: m + 1]
        u = sum_all(lattice, (x.scale(float(eps) ** j) for j, (x, _) in enumerate(kept)))
        v = sum_all(lattice, (y.scale(float(eps) ** j) for j, (_, y) in enumerate(kept)))
        samples1.append(u.mul(u.diff()).scale(-6 / p.k**2).add(v.mul(v.diff()).scale(2 * p.b / (p.a * p.k**2))))
        samples2.append(u.mul(v.diff()).scale(-3 / p.k**2))
    vandermonde = np.vander(nodes, increasing=True)

    def coefficient(samples: list[ExpSum]) -> ExpSum:
        keys = sorted({key for s in samples for key in s.keys()})
        values = np.array([[s.coefficient(key) for key in keys] for s in samples])
        solved = np.linalg.solve(vandermonde, values)
        return ExpSum(lattice, dict(zip(keys, solved[m].tolist(), strict=True)))

    return coefficient(samples1), coefficient(samples2)


def shifted_keys(first: ExpSum, second: ExpSum) -> set[LatticeKey]:
    return {(m1 + m2, n1 + n2) for m1, n1 in first.keys() for m2, n2 in second.keys()}


def test_leading_term(soliton_params: Params) -> None:
    u0, v0 = leading_term(soliton_params)
    assert u0.terms == {(1, 0): 1.9}
    assert v0.terms == {(0, 1): 0.5}
    assert u0.lattice == Lattice(soliton_params.lambda1, soliton_params.lambda2)


def test_leading_term_of_zero_seed(soliton_params: Params) -> None:
    u0, v0 = leading_term(soliton_params.replace(c1=0.0, c2=0.0))
    assert not u0 and not v0


@pytest.mark.parametrize("case", [LeadingCase.MIXED, LeadingCase.NEGATIVE])
def test_other_leading_cases_are_unsupported(soliton_params: Params, case: LeadingCase) -> None:
    with pytest.raises(UnsupportedLeadingCaseError) as exc_info:
        leading_term(soliton_params, case)
    assert isinstance(exc_info.value, NotImplementedError)
    assert exc_info.value.details["case"] == case.value


def test_first_delta_without_second_component(soliton_params: Params) -> None:
    p = soliton_params.replace(c2=0.0)
    delta1, delta2 = adomian_delta(iterate(p, 0), 0)
    assert delta1.keys() == [(2, 0)]
    assert delta1.coefficient((2, 0)) == pytest.approx(-6 / p.k**2 * p.c1**2 * p.lambda1, rel=1e-14)
    assert not delta2


def test_first_delta_of_second_equation(soliton_params: Params) -> None:
    p = soliton_params
    _, delta2 = adomian_delta(iterate(p, 0), 0)
    assert delta2.terms == pytest.approx({(1, 1): -3 / p.k**2 * p.c1 * p.c2 * p.lambda2}, rel=1e-14)


def test_delta_needs_all_previous_orders(soliton_params: Params) -> None:
    with pytest.raises(InputError):
        adomian_delta(iterate(soliton_params, 1), 2)


@pytest.mark.parametrize("row", TABLE1, ids=TableRows.TABLE1_IDS)
def test_first_three_orders_on_the_lattice(row: ParamRow) -> None:
    state = iterate(row.params, 3)
    for n, (expected_u, expected_v) in enumerate(lattice_corrections(row.params)):
        u, v = state.corrections[n]
        for actual, expected in ((u, expected_u), (v, expected_v)):
            assert set(actual.keys()) == set(expected), f"order {n}"
            for key, c in expected.items():
                assert actual.coefficient(key) == pytest.approx(c, rel=1e-10), f"order {n}, key {key}"


@pytest.mark.parametrize("row", TABLE1, ids=TableRows.TABLE1_IDS)
@pytest.mark.parametrize("xi", [-12.0, -3.0, 0.0])
def test_first_three_orders_match_closed_form(row: ParamRow, xi: float) -> None:
    state = iterate(row.params, 3)
    for n, (expected_u, expected_v) in enumerate(closed_form_corrections(row.params, xi), start=1):
        u, v = state.corrections[n]
        assert math.isclose(u.eval(xi), expected_u, rel_tol=1e-10, abs_tol=1e-12 * magnitude(u, xi))
        assert math.isclose(v.eval(xi), expected_v, rel_tol=1e-10, abs_tol=1e-12 * magnitude(v, xi))


@pytest.mark.parametrize("row", TABLE1, ids=TableRows.TABLE1_IDS)
def test_corrections_are_epsilon_taylor_coefficients(row: ParamRow) -> None:
    p = row.params
    xi = xi_at_ratio(p, 0.2)
    state = iterate(p, 3)
    coefficients = taylor_coefficients(ClosedFormContext(p), xi)
    scale_u = sum(magnitude(u, xi) for u, _ in state.corrections)
    scale_v = sum(magnitude(v, xi) for _, v in state.corrections)
    for (u, v), (taylor_u, taylor_v) in zip(state.corrections, coefficients, strict=True):
        assert u.eval(xi) == pytest.approx(taylor_u, abs=1e-6 * scale_u)
        assert v.eval(xi) == pytest.approx(taylor_v, abs=1e-6 * scale_v)


@pytest.mark.parametrize("row", TableRows.ALL_ROWS, ids=TableRows.ALL_IDS)
def test_corrections_have_total_weight_n_plus_one(row: ParamRow) -> None:
    state = iterate(row.params, 6)
    for n, (u, v) in enumerate(state.corrections):
        assert all(m + j == n + 1 for m, j in u.keys())
        assert all(m + j == n + 1 for m, j in v.keys())
        assert all(j % 2 == 0 for _, j in u.keys())
        assert all(j % 2 == 1 for _, j in v.keys())


@pytest.mark.parametrize("row", TABLE1, ids=TableRows.TABLE1_IDS)
def test_delta_is_the_epsilon_coefficient_of_the_nonlinearity(row: ParamRow) -> None:
    state = iterate(row.params, 3)
    for m in range(4):
        delta1, delta2 = adomian_delta(state, m)
        expected1, expected2 = epsilon_coefficient_of_nonlinearity(state, m)
        assert_sums_close(delta1, expected1, rel=1e-9)
        assert_sums_close(delta2, expected2, rel=1e-9)


@pytest.mark.parametrize("row", TABLE1, ids=TableRows.TABLE1_IDS)
def test_delta_does_not_depend_on_assembly_order(row: ParamRow) -> None:
    p = row.params
    state = iterate(p, 4)
    lattice = state.lattice
    us = [u for u, _ in state.corrections]
    vs = [v for _, v in state.corrections]
    for m in range(5):
        delta1, delta2 = adomian_delta(state, m)
        backwards = list(reversed(range(m + 1)))
        reordered1 = sum_all(
            lattice,
            [
                *(vs[j].scale(2 * p.b / (p.a * p.k**2)).mul(vs[m - j].diff()) for j in backwards),
                *(us[m - j].diff().mul(us[j]).scale(-6 / p.k**2) for j in backwards),
            ],
        )
        reordered2 = sum_all(lattice, (us[j].scale(-3 / p.k**2).mul(vs[m - j].diff()) for j in backwards))
        assert_sums_close(reordered1, delta1, rel=1e-13)
        assert_sums_close(reordered2, delta2, rel=1e-13)


@pytest.mark.parametrize("row", TableRows.ALL_ROWS, ids=TableRows.ALL_IDS)
def test_corrections_stay_on_product_keys(row: ParamRow) -> None:
    state = iterate(row.params, 6)
    us = [u for u, _ in state.corrections]
    vs = [v for _, v in state.corrections]
    for n in range(state.order):
        from_u: set[LatticeKey] = set()
        from_v: set[LatticeKey] = set()
        for j in range(n + 1):
            from_u |= shifted_keys(us[j], us[n - j]) | shifted_keys(vs[j], vs[n - j])
            from_v |= shifted_keys(us[j], vs[n - j])
        u_next, v_next = state.corrections[n + 1]
        assert set(u_next.keys()) <= from_u, f"order {n + 1}"
        assert set(v_next.keys()) <= from_v, f"order {n + 1}"


@pytest.mark.parametrize("row", TABLE1, ids=TableRows.TABLE1_IDS)
def test_partial_sum_residual_shrinks_with_order(row: ParamRow) -> None:
    p = row.params
    state = iterate(p, 8)
    probes = np.array(convergence_probes(p))
    residuals = []
    for n in range(2, 9):
        r1, r2 = series_residual(state, n, probes)
        residuals.append(np.maximum(np.abs(r1), np.abs(r2)))
    for before, after in zip(residuals, residuals[1:]):
        assert np.all(after <= 2 * before + 1e-9)
    assert np.all(residuals[-1] <= np.maximum(1e-2 * residuals[0], 1e-9))


def test_partial_sums(soliton_params: Params) -> None:
    state = iterate(soliton_params, 3)
    xi = -5.0
    u_sum, v_sum = state.partial_sums(3)
    assert partial_sum(state, 3, xi) == pytest.approx((u_sum.eval(xi), v_sum.eval(xi)), rel=1e-14)
    assert partial_sum(state, 0, xi) == pytest.approx(
        (1.9 * math.exp(soliton_params.lambda1 * xi), 0.5 * math.exp(soliton_params.lambda2 * xi)), rel=1e-15
    )
    with pytest.raises(InputError):
        partial_sum(state, 4, xi)
    with pytest.raises(InputError):
        state.partial_sums(-1)


def test_zero_iterations_is_the_leading_term(soliton_params: Params) -> None:
    state = iterate(soliton_params, 0)
    assert state.order == 0
    assert state.corrections == (leading_term(soliton_params),)


def test_zero_seed_stays_zero(soliton_params: Params) -> None:
    state = iterate(soliton_params.replace(c1=0.0, c2=0.0), 4)
    assert all(not u and not v for u, v in state.corrections)
    assert partial_sum(state, 4, 1.0) == (0.0, 0.0)


def test_iteration_limits(soliton_params: Params) -> None:
    with pytest.raises(IterationCapError) as exc_info:
        iterate(soliton_params, 17)
    assert exc_info.value.details == {"n": 17, "max_order": 16}
    assert iterate(soliton_params, 16).order == 16
    with pytest.raises(InputError):
        iterate(soliton_params, -1)
    with pytest.raises(IterationCapError):
        iterate(soliton_params, 5, max_order=4)


def test_resonance_reports_the_order(soliton_params: Params) -> None:
    with pytest.raises(ResonanceError) as exc_info:
        iterate(soliton_params, 2, resonance_scale=1e6)
    assert exc_info.value.details["order"] == 1
    assert exc_info.value.details["key"] == [0, 2]


def test_state_to_dict(soliton_params: Params) -> None:
    data = json.loads(json.dumps(iterate(soliton_params, 2).to_dict()))
    assert data["order"] == 2
    assert data["lambda1"] == pytest.approx(0.4)
    assert [entry["n"] for entry in data["corrections"]] == [0, 1, 2]
    assert data["corrections"][0]["U"] == [{"m": 1, "n": 0, "c": 1.9}]
    terms = data["corrections"][1]["V"]
    restored = ExpSum.from_dict({"lambda1": data["lambda1"], "lambda2": data["lambda2"], "terms": terms})
    assert restored == iterate(soliton_params, 1).corrections[1][1]


@pytest.mark.parametrize("row", TableRows.ALL_ROWS, ids=TableRows.ALL_IDS)
def test_series_converges_at_probe_points(row: ParamRow) -> None:
    p = row.params
    state = iterate(p, 8)
    probes = convergence_probes(p)
    assert len(probes) == 5
    assert all(convergence_ratio(p, xi) <= 0.05 for xi in probes)
    table = convergence_table(state, probes)
    assert len(table) == 5 * 9
    for xi in probes:
        rows = [entry for entry in table if entry["xi"] == xi]
        assert [entry["n"] for entry in rows] == list(range(9))
        assert rows[-1]["error_U"] < 1e-8
        assert rows[-1]["error_V"] < 1e-8
        # U and V alternate between even and odd powers of c2, so compare every other order.
        for before, after in zip(rows, rows[2:]):
            assert after["error_U"] <= 2 * before["error_U"] + 1e-12
            assert after["error_V"] <= 2 * before["error_V"] + 1e-12


def test_xi_at_ratio_hits_the_ratio(soliton_params: Params) -> None:
    for ratio in (0.05, 0.2, 2.0):
        xi = xi_at_ratio(soliton_params, ratio)
        assert convergence_ratio(soliton_params, xi) == pytest.approx(ratio, rel=1e-8)
    assert is_convergent(soliton_params, xi_at_ratio(soliton_params, 0.2))
    assert not is_convergent(soliton_params, xi_at_ratio(soliton_params, 2.0))


def test_xi_at_ratio_rejects_zero_seed(soliton_params: Params) -> None:
    with pytest.raises(InputError):
        xi_at_ratio(soliton_params.replace(c1=0.0, c2=0.0), 0.1)


@pytest.mark.parametrize("ratio", [1e-30, 1e30], ids=["below", "above"])
def test_xi_at_ratio_caps_the_bracket_search(
    soliton_params: Params, monkeypatch: pytest.MonkeyPatch, ratio: float
) -> None:
    monkeypatch.setattr(rcam, "MAX_BRACKET_STEPS", 2)
    with pytest.raises(InputError):
        xi_at_ratio(soliton_params, ratio)


def test_ratio_of_single_component_seed(soliton_params: Params) -> None:
    p = soliton_params.replace(c2=0.0)
    L = p.lambda1
    for xi in (-20.0, -5.0, 3.0):
        expected = abs(p.c1) * math.exp(L * xi) / (2 * p.k**2 * L**2)
        assert convergence_ratio(p, xi) == pytest.approx(expected, rel=1e-12)
        assert convergence_bound(p, xi) == pytest.approx(expected, rel=1e-12)
