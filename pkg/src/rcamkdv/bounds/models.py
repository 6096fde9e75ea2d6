from enum import StrEnum
from typing import Any, Self

from pydantic import BaseModel, ConfigDict, Field, model_validator


class CaseLabel(StrEnum):
    """Ordering of the roots.

    I: lambda1/2 < lambda2 < lambda1; II: lambda1 < lambda2; III: lambda2 < lambda1/2.
    """

    I = "I"  # noqa: E741
    II = "II"
    III = "III"
    NONE = "none"


class Subcase(StrEnum):
    A = "a"
    B = "b"
    C = "c"
    D = "d"
    NONE = "none"


class QSign(StrEnum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    MIXED = "mixed"


def verdict_label(case_label: CaseLabel, subcase: Subcase) -> str:
    """Table-style label such as "I.(a)", or "none"."""
    if case_label is CaseLabel.NONE or subcase is Subcase.NONE:
        return "none"
    return f"{case_label.value}.({subcase.value})"


class TailFit(BaseModel):
    """Monotone exponential decay verdict for one tail."""

    model_config = ConfigDict(frozen=True)

    ok: bool
    rate: float | None = Field(default=None, description="Fitted decay rate; None when saturated")
    saturated: bool = False


class BoundsReport(BaseModel):
    """Boundedness verdict for one parameter set.

    ``subcase`` is the matching condition set of the selected theorem. A report
    whose sub-case holds while the scanned Q changes sign contradicts those
    conditions, so it can never match its expected label.
    """

    model_config = ConfigDict(frozen=True)

    label: str = ""
    theorem: int = 1
    case_label: CaseLabel
    subcase: Subcase
    verdict: str
    expected: str = "none"
    matches_expected: bool = True
    q_sign: QSign
    q_min_abs: float
    q_certificate: QSign
    humps_U: int
    humps_V: int
    prominence: float
    tail_ok: tuple[bool, bool]
    tail_rates_U: tuple[float | None, float | None]
    tail_rates_V: tuple[float | None, float | None]
    tail_ok_V: tuple[bool, bool]
    scan_range: tuple[float, float]
    notes: list[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_sign(self) -> Self:
        if self.subcase is not Subcase.NONE and self.q_sign is QSign.MIXED and self.matches_expected:
            raise ValueError("a report with a mixed-sign Q under a bounded sub-case cannot match its expectation")
        return self

    def to_json_dict(self) -> dict[str, Any]:
        return self.model_dump(mode="json")
