"""Sampled curves and surfaces, with CSV and JSON emission."""

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

from rcamkdv.errors import InputError


def format_number(value: float) -> str:
    """Shortest round-trippable text with 17 significant digits."""
    return f"{value:.17g}"


@dataclass(frozen=True)
class CurveSample:
    """Columns of sampled values sharing one row index.

    A profile has header ("xi", "U", "V"); a surface has ("x", "t", "u", "v")
    in row-major order (t outer, x inner).
    """

    header: tuple[str, ...]
    rows: NDArray[np.float64] = field(repr=False)
    label: str = ""

    def __post_init__(self) -> None:
        data = np.atleast_2d(np.asarray(self.rows, dtype=np.float64))
        if data.shape[1] != len(self.header):
            raise InputError(f"Expected {len(self.header)} columns, got {data.shape[1]}")
        object.__setattr__(self, "rows", data)

    @classmethod
    def from_columns(cls, columns: dict[str, ArrayLike], label: str = "") -> "CurveSample":
        arrays = [np.ravel(np.asarray(values, dtype=np.float64)) for values in columns.values()]
        return cls(tuple(columns), np.column_stack(arrays), label)

    def __len__(self) -> int:
        return int(self.rows.shape[0])

    def column(self, name: str) -> NDArray[np.float64]:
        try:
            index = self.header.index(name)
        except ValueError as e:
            raise InputError(f"No column '{name}' in {', '.join(self.header)}") from e
        return np.asarray(self.rows[:, index])

    @property
    def abscissa(self) -> NDArray[np.float64]:
        return np.asarray(self.rows[:, 0])

    def select(self, name: str) -> "CurveSample":
        """One-dimensional view (first column, ``name``)."""
        return CurveSample((self.header[0], name), np.column_stack([self.abscissa, self.column(name)]), self.label)

    def join(self, other: "CurveSample") -> "CurveSample":
        """Append the value column of ``other`` sampled at the same coordinates."""
        coordinates = len(self.header) - 1
        if len(self) != len(other) or not np.array_equal(self.rows[:, :coordinates], other.rows[:, :coordinates]):
            raise InputError("Samples are not on the same coordinates")
        rows = np.column_stack([self.rows, other.rows[:, -1]])
        return CurveSample((*self.header, other.header[-1]), rows, self.label)

    def to_csv(self) -> str:
        lines = [",".join(self.header)]
        lines.extend(",".join(format_number(v) for v in row) for row in self.rows.tolist())
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict[str, Any]:
        return {
            "label": self.label,
            "header": list(self.header),
            "rows": self.rows.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"
