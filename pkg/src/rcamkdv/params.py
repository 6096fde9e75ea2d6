"""Parameter models, verification tolerances and parameter-table loading."""

import csv
import math
from importlib import resources
from pathlib import Path
from typing import Any, Self

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, ValidationInfo, model_validator
from pydantic_core import PydanticCustomError

from rcamkdv.algebra.expsum import RESONANCE_SCALE, Lattice
from rcamkdv.errors import ParamsError, TableFormatError

TABLE_COLUMNS = ("case", "a", "b", "c", "k", "c1", "c2", "alpha", "beta", "xi0", "expected_subcase")
OPTIONAL_COLUMNS = {"alpha": 1.0, "beta": 1.0, "xi0": 0.0}
BUNDLED_TABLES = ("table1", "table2")


class Params(BaseModel):
    """Parameters of the coupled system and of its traveling-wave solution.

    ``a, b`` are the system coefficients, ``c`` the wave speed, ``k`` the wave
    number, ``alpha, beta`` the conformable orders in x and t, ``xi0`` the phase
    and ``c1, c2`` the integration constants of the leading term.

    The root checks use the resonance scale passed as ``context={"resonance": ...}``
    to ``model_validate``, or ``RESONANCE_SCALE`` without one.
    """

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    a: float
    b: float
    c: float
    k: float
    alpha: float = Field(default=1.0, gt=0.0, le=1.0)
    beta: float = Field(default=1.0, gt=0.0, le=1.0)
    xi0: float = 0.0
    c1: float
    c2: float

    @model_validator(mode="after")
    def _check_roots(self, info: ValidationInfo) -> Self:
        if self.k == 0.0:
            raise PydanticCustomError("invalid-params", "k must be nonzero")
        if self.a <= 0.0 or self.c * self.k**3 >= 0.0:
            raise PydanticCustomError(
                "invalid-params",
                "lambda1 and lambda2 must be real and positive (requires a > 0 and c*k^3 < 0)",
            )
        scale = float((info.context or {}).get("resonance", RESONANCE_SCALE))
        tau = Lattice(self.lambda1, self.lambda2).resonance_threshold(scale)
        if abs(self.lambda1 - self.lambda2) < tau:
            raise PydanticCustomError(
                "distinct-roots-violation",
                "lambda1 and lambda2 coincide (a = {a}); the roots must be distinct",
                {"a": self.a},
            )
        if abs(self.lambda1 - 2.0 * self.lambda2) < tau / self.lambda1**2:
            raise PydanticCustomError(
                "resonance",
                "lambda1 = 2*lambda2 (a = 1/4) makes the correction terms singular",
            )
        return self

    @property
    def lambda1(self) -> float:
        return math.sqrt(-self.c / (self.a * self.k**3))

    @property
    def lambda2(self) -> float:
        return math.sqrt(-self.c / self.k**3)

    @property
    def case_hint(self) -> str:
        """Root-ordering case read off ``a`` alone (lambda2 = sqrt(a) lambda1)."""
        if self.a > 1.0:
            return "II"
        return "I" if self.a > 0.25 else "III"

    @classmethod
    def from_lambdas(
        cls,
        lambda1: float,
        lambda2: float,
        b: float,
        k: float,
        c1: float,
        c2: float,
        alpha: float = 1.0,
        beta: float = 1.0,
        xi0: float = 0.0,
    ) -> "Params":
        """Build parameters from the two roots, with a = (lambda2/lambda1)^2 and c = -lambda2^2 k^3."""
        if lambda1 <= 0.0 or lambda2 <= 0.0:
            raise ParamsError("lambda1 and lambda2 must be positive")
        return build_params(
            a=(lambda2 / lambda1) ** 2,
            b=b,
            c=-(lambda2**2) * k**3,
            k=k,
            c1=c1,
            c2=c2,
            alpha=alpha,
            beta=beta,
            xi0=xi0,
        )

    def replace(self, **changes: Any) -> "Params":
        """Return a validated copy with some fields changed."""
        return build_params(**{**self.model_dump(), **changes})


def build_params(resonance_scale: float = RESONANCE_SCALE, **values: Any) -> Params:
    """Validate parameters, raising ParamsError (with the validator's kind) on failure."""
    try:
        return Params.model_validate(values, context={"resonance": resonance_scale})
    except ValidationError as e:
        raise ParamsError.from_validation(e) from e


class Tolerances(BaseModel):
    """Verification tolerances. Defaults are echoed into every report."""

    model_config = ConfigDict(frozen=True)

    ode: float = Field(default=1e-6, gt=0.0)
    pde: float = Field(default=1e-4, gt=0.0)
    series: float = Field(default=1e-8, gt=0.0)
    prominence: float = Field(default=0.05, gt=0.0, lt=1.0)
    tail_level: float = Field(default=1e-4, gt=0.0, lt=1.0)
    resonance: float = Field(default=RESONANCE_SCALE, gt=0.0)


class ParamRow(BaseModel):
    """One labelled row of a parameter table."""

    model_config = ConfigDict(frozen=True)

    label: str
    params: Params
    expected_subcase: str = "none"
    provenance: str = ""


def _row_from_mapping(raw: dict[str, Any], row_number: int, resonance_scale: float) -> ParamRow:
    values: dict[str, Any] = {}
    for column in TABLE_COLUMNS[1:-1]:
        cell = raw.get(column)
        if cell is None or (isinstance(cell, str) and not cell.strip()):
            if column in OPTIONAL_COLUMNS:
                values[column] = OPTIONAL_COLUMNS[column]
                continue
            raise TableFormatError(f"Row {row_number}: missing value for '{column}'", row=row_number)
        try:
            values[column] = float(cell)
        except (TypeError, ValueError) as e:
            raise TableFormatError(f"Row {row_number}: '{column}' is not a number: {cell!r}", row=row_number) from e
    try:
        params = build_params(resonance_scale, **values)
    except ParamsError as e:
        raise ParamsError(f"Row {row_number}: {e}", kind=e.error_kind, row=row_number) from e
    return ParamRow(
        label=str(raw.get("case") or f"row-{row_number}").strip(),
        params=params,
        expected_subcase=str(raw.get("expected_subcase") or "none").strip(),
        provenance=str(raw.get("provenance") or "").strip(),
    )


def parse_param_table(text: str, resonance_scale: float = RESONANCE_SCALE) -> list[ParamRow]:
    """Parse CSV parameter-table text."""
    reader = csv.DictReader(line for line in text.splitlines() if line.strip() and not line.lstrip().startswith("#"))
    if reader.fieldnames is None:
        return []
    missing = [column for column in TABLE_COLUMNS if column not in reader.fieldnames and column not in OPTIONAL_COLUMNS]
    if missing:
        raise TableFormatError(f"Parameter table is missing columns: {', '.join(missing)}", row=0)
    return [_row_from_mapping(raw, number, resonance_scale) for number, raw in enumerate(reader, start=1)]


def load_param_table(path: Path, resonance_scale: float = RESONANCE_SCALE) -> list[ParamRow]:
    """Load a parameter table from CSV, or from YAML holding one mapping or a list of mappings."""
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() not in (".yaml", ".yml"):
        return parse_param_table(text, resonance_scale)

    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise TableFormatError(f"Invalid YAML in {path}: {e}", row=0) from e
    if data is None:
        return []
    entries = data if isinstance(data, list) else [data]
    rows = []
    for number, entry in enumerate(entries, start=1):
        if not isinstance(entry, dict):
            raise TableFormatError(f"Row {number}: expected a mapping of parameters", row=number)
        rows.append(_row_from_mapping(entry, number, resonance_scale))
    return rows


def bundled_table(name: str, resonance_scale: float = RESONANCE_SCALE) -> list[ParamRow]:
    """Load one of the parameter tables shipped with the package ("table1" or "table2")."""
    if name not in BUNDLED_TABLES:
        raise TableFormatError(f"Unknown bundled table '{name}'. Choose from: {', '.join(BUNDLED_TABLES)}", row=0)
    text = resources.files("rcamkdv").joinpath("data", f"{name}.csv").read_text(encoding="utf-8")
    return parse_param_table(text, resonance_scale)
