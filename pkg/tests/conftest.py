from collections.abc import Callable
from pathlib import Path
from typing import Any

import numpy as np
import pytest
from hypothesis import strategies as st
from hypothesis.strategies import composite

from rcamkdv.algebra.expsum import ExpSum, Lattice, LatticeKey
from rcamkdv.params import ParamRow, Params, bundled_table

TABLE1 = bundled_table("table1")
TABLE2 = bundled_table("table2")

# Base exponents for randomized algebra checks; no key in 0..3 x 0..3 other than
# (0, 0), (1, 0) and (0, 1) is resonant with either of them.
PROBE_LATTICE = Lattice(0.9, 0.35)
RESONANT_KEYS = {(0, 0), (1, 0), (0, 1)}


class TableRows:
    """Bundled parameter rows, split for parametrization."""

    TABLE1_IDS = [row.label for row in TABLE1]
    TABLE2_IDS = [row.label for row in TABLE2]
    ALL_ROWS = [*TABLE1, *TABLE2]
    ALL_IDS = [f"table1-{row.label}" for row in TABLE1] + [f"table2-{row.label}" for row in TABLE2]


def table1_row(label: str) -> ParamRow:
    return next(row for row in TABLE1 if row.label == label)


def table2_row(label: str) -> ParamRow:
    return next(row for row in TABLE2 if row.label == label)


def case_of(label: str) -> str:
    """Case part of a row label, e.g. III.(b) -> III."""
    return label.split(".")[0]


def magnitude(s: ExpSum, xi: float) -> float:
    """Sum of |c| e^{mu xi}, the scale against which evaluation errors are measured."""
    return float(sum(abs(c) * np.exp(s.lattice.exponent(key) * xi) for key, c in s.items()))


def assert_sums_close(actual: ExpSum, expected: ExpSum, rel: float = 1e-12) -> None:
    """Coefficientwise comparison, relative to the largest coefficient of either sum."""
    assert actual.lattice == expected.lattice
    scale = max([abs(c) for _, c in actual.items()] + [abs(c) for _, c in expected.items()] + [0.0])
    for key in set(actual.keys()) | set(expected.keys()):
        difference = abs(actual.coefficient(key) - expected.coefficient(key))
        assert difference <= rel * scale, f"{key}: {actual.coefficient(key)} != {expected.coefficient(key)}"


@pytest.fixture(scope="module")
def table1() -> list[ParamRow]:
    return TABLE1


@pytest.fixture(scope="module")
def table2() -> list[ParamRow]:
    return TABLE2


@pytest.fixture
def soliton_params() -> Params:
    """Table 1 row I.(a): lambda1 = 0.4, lambda2 = 0.399."""
    return table1_row("I.(a)").params


@pytest.fixture
def write_table(tmp_path: Path) -> Callable[[str, str], Path]:
    """Write a parameter table with the given text into tmp_path."""

    def _write(name: str, text: str) -> Path:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return _write


@composite
def expsum_strategy(
    draw: Callable[[st.SearchStrategy[Any]], Any],
    lattice: Lattice = PROBE_LATTICE,
    exclude: frozenset[LatticeKey] = frozenset(),
) -> ExpSum:
    """Small-integer coefficients on keys in 0..3 x 0..3, so ring laws hold exactly."""
    keys = st.tuples(st.integers(0, 3), st.integers(0, 3)).filter(lambda key: key not in exclude)
    terms = draw(st.dictionaries(keys, st.integers(-5, 5).filter(bool).map(float), max_size=5))
    return ExpSum(lattice, terms)


@composite
def non_resonant_expsum_strategy(draw: Callable[[st.SearchStrategy[Any]], Any]) -> ExpSum:
    """Sums the inverse operator accepts for both lambda1 and lambda2 of the probe lattice."""
    keys = st.tuples(st.integers(0, 3), st.integers(0, 3)).filter(lambda key: key not in RESONANT_KEYS)
    values = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False).filter(lambda c: abs(c) > 1e-3)
    return ExpSum(PROBE_LATTICE, draw(st.dictionaries(keys, values, min_size=1, max_size=6)))


@composite
def valid_params_strategy(draw: Callable[[st.SearchStrategy[Any]], Any]) -> Params:
    """Random valid parameters with a kept away from the case boundaries 1 and 1/4."""
    a = draw(
        st.floats(min_value=0.01, max_value=10.0).filter(lambda v: abs(v - 1.0) > 1e-2 and abs(v - 0.25) > 1e-2)
    )
    k = draw(st.floats(min_value=0.5, max_value=2.0)) * draw(st.sampled_from([-1.0, 1.0]))
    speed = draw(st.floats(min_value=0.1, max_value=2.0))
    c = speed if k < 0.0 else -speed
    return Params(
        a=a,
        b=draw(st.floats(min_value=-3.0, max_value=3.0)),
        c=c,
        k=k,
        c1=draw(st.floats(min_value=-5.0, max_value=5.0)),
        c2=draw(st.floats(min_value=-5.0, max_value=5.0)),
    )
