"""Finite sums of exponentials on the (lambda1, lambda2) exponent lattice.

An ``ExpSum`` holds coefficients c[m, n] of exp((m*lambda1 + n*lambda2) * xi).
Exponents stay exact integers; coefficients are doubles. Every operation
returns a new canonical sum: keys are unique, sorted lexicographically, and
coefficients below ``DROP_TOLERANCE * max|c|`` are removed.
"""

import math
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

from rcamkdv.errors import EvaluationRangeError, LatticeMismatchError, ResonanceError

LatticeKey = tuple[int, int]

DROP_TOLERANCE = 1e-14
RESONANCE_SCALE = 1e-9
MAX_EXPONENT = 700.0


@dataclass(frozen=True)
class Lattice:
    """The pair of base exponents the lattice keys refer to."""

    lambda1: float
    lambda2: float

    def exponent(self, key: LatticeKey) -> float:
        m, n = key
        return m * self.lambda1 + n * self.lambda2

    def resonance_threshold(self, scale: float = RESONANCE_SCALE) -> float:
        return scale * max(1.0, self.lambda1**3)


def _canonical(terms: Iterable[tuple[LatticeKey, float]]) -> dict[LatticeKey, float]:
    merged: dict[LatticeKey, float] = {}
    for key, coefficient in terms:
        merged[key] = merged.get(key, 0.0) + coefficient
    largest = max((abs(c) for c in merged.values()), default=0.0)
    if largest == 0.0:
        return {}
    floor = DROP_TOLERANCE * largest
    return {key: merged[key] for key in sorted(merged) if merged[key] != 0.0 and abs(merged[key]) >= floor}


class ExpSum:
    """Immutable canonical exponential sum.

    Args:
        lattice: Base exponents (lambda1, lambda2)
        terms: Mapping of lattice keys (m, n) to coefficients
    """

    __slots__ = ("_lattice", "_terms")

    def __init__(self, lattice: Lattice, terms: Mapping[LatticeKey, float] | None = None) -> None:
        self._lattice = lattice
        items = ((k, float(c)) for k, c in (terms or {}).items())
        self._terms = _canonical(((int(m), int(n)), c) for (m, n), c in items)

    @classmethod
    def zero(cls, lattice: Lattice) -> "ExpSum":
        return cls(lattice)

    @classmethod
    def monomial(cls, lattice: Lattice, key: LatticeKey, coefficient: float) -> "ExpSum":
        return cls(lattice, {key: coefficient})

    @property
    def lattice(self) -> Lattice:
        return self._lattice

    @property
    def terms(self) -> dict[LatticeKey, float]:
        """A copy of the canonical terms, in key order."""
        return dict(self._terms)

    def keys(self) -> list[LatticeKey]:
        return list(self._terms)

    def coefficient(self, key: LatticeKey) -> float:
        return self._terms.get(key, 0.0)

    def items(self) -> Iterator[tuple[LatticeKey, float]]:
        return iter(self._terms.items())

    def __len__(self) -> int:
        return len(self._terms)

    def __bool__(self) -> bool:
        return bool(self._terms)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ExpSum):
            return NotImplemented
        return self._lattice == other._lattice and self._terms == other._terms

    def __hash__(self) -> int:
        return hash((self._lattice, tuple(self._terms.items())))

    def __repr__(self) -> str:
        body = ", ".join(f"{k}: {c:.17g}" for k, c in self._terms.items())
        return f"ExpSum({{{body}}})"

    def _check_lattice(self, other: "ExpSum") -> None:
        if self._lattice != other._lattice:
            raise LatticeMismatchError(
                "Cannot combine sums on different lattices",
                left=[self._lattice.lambda1, self._lattice.lambda2],
                right=[other._lattice.lambda1, other._lattice.lambda2],
            )

    def add(self, other: "ExpSum") -> "ExpSum":
        self._check_lattice(other)
        result = ExpSum(self._lattice)
        result._terms = _canonical([*self._terms.items(), *other._terms.items()])
        return result

    def sub(self, other: "ExpSum") -> "ExpSum":
        return self.add(other.scale(-1.0))

    def neg(self) -> "ExpSum":
        return self.scale(-1.0)

    def mul(self, other: "ExpSum") -> "ExpSum":
        """Cauchy product: keys add componentwise, coefficients multiply and accumulate."""
        self._check_lattice(other)
        products = (
            ((m1 + m2, n1 + n2), c1 * c2)
            for (m1, n1), c1 in self._terms.items()
            for (m2, n2), c2 in other._terms.items()
        )
        result = ExpSum(self._lattice)
        result._terms = _canonical(products)
        return result

    def scale(self, factor: float) -> "ExpSum":
        result = ExpSum(self._lattice)
        result._terms = _canonical((key, c * factor) for key, c in self._terms.items())
        return result

    def diff(self) -> "ExpSum":
        """Derivative in xi: each coefficient is multiplied by its exponent."""
        result = ExpSum(self._lattice)
        result._terms = _canonical((key, c * self._lattice.exponent(key)) for key, c in self._terms.items())
        return result

    def apply_op(self, lam: float) -> "ExpSum":
        """Apply the linear operator f''' - lam^2 f'."""
        first = self.diff()
        return first.diff().diff().sub(first.scale(lam * lam))

    def apply_inverse_op(self, lam: float, resonance_scale: float = RESONANCE_SCALE) -> "ExpSum":
        """Particular solution of f''' - lam^2 f' = self with all homogeneous constants dropped.

        Raises:
            ResonanceError: If some key has |mu * (mu^2 - lam^2)| below the resonance threshold;
                keys are checked in ascending (m, n) order and the first resonant one is reported
        """
        threshold = self._lattice.resonance_threshold(resonance_scale)
        divided = []
        for key, c in self._terms.items():
            mu = self._lattice.exponent(key)
            denominator = mu * (mu * mu - lam * lam)
            if abs(denominator) < threshold:
                raise ResonanceError(
                    f"Exponent {key} is resonant with lambda={lam:.17g} (|mu(mu^2-lambda^2)| = {abs(denominator):.3e})",
                    key=list(key),
                    lam=lam,
                )
            divided.append((key, c / denominator))
        result = ExpSum(self._lattice)
        result._terms = _canonical(divided)
        return result

    def support(self) -> float:
        """Largest exponent present (0 for the empty sum)."""
        return max((self._lattice.exponent(key) for key in self._terms), default=0.0)

    def eval(self, xi: float) -> float:
        """Evaluate at one point, summing in key order."""
        total = 0.0
        for key, c in self._terms.items():
            argument = self._lattice.exponent(key) * xi
            if argument > MAX_EXPONENT:
                raise EvaluationRangeError(
                    f"exp({argument:.1f}) exceeds the overflow guard at xi={xi}", xi=xi, key=list(key)
                )
            total += c * math.exp(argument)
        return total

    def evaluate(self, xi: ArrayLike) -> NDArray[np.float64]:
        """Vectorized evaluation over an array of points, same summation order as ``eval``."""
        points = np.asarray(xi, dtype=np.float64)
        total = np.zeros_like(points)
        for key, c in self._terms.items():
            argument = self._lattice.exponent(key) * points
            if np.any(argument > MAX_EXPONENT):
                raise EvaluationRangeError(
                    "Exponent exceeds the overflow guard", xi_max=float(np.max(points)), key=list(key)
                )
            total = total + c * np.exp(argument)
        return total

    def to_dict(self) -> dict[str, Any]:
        return {
            "lambda1": self._lattice.lambda1,
            "lambda2": self._lattice.lambda2,
            "terms": [{"m": m, "n": n, "c": c} for (m, n), c in self._terms.items()],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ExpSum":
        lattice = Lattice(float(data["lambda1"]), float(data["lambda2"]))
        terms: dict[LatticeKey, float] = {}
        for term in data.get("terms", []):
            key = (int(term["m"]), int(term["n"]))
            terms[key] = terms.get(key, 0.0) + float(term["c"])
        return cls(lattice, terms)


def add(s1: ExpSum, s2: ExpSum) -> ExpSum:
    return s1.add(s2)


def mul(s1: ExpSum, s2: ExpSum) -> ExpSum:
    return s1.mul(s2)


def scale(s: ExpSum, r: float) -> ExpSum:
    return s.scale(r)


def diff(s: ExpSum) -> ExpSum:
    return s.diff()


def apply_inverse_op(s: ExpSum, lam: float, resonance_scale: float = RESONANCE_SCALE) -> ExpSum:
    return s.apply_inverse_op(lam, resonance_scale)


def evaluate(s: ExpSum, xi: float) -> float:
    return s.eval(xi)


def sum_all(lattice: Lattice, sums: Iterable[ExpSum]) -> ExpSum:
    """Add several sums, left to right."""
    total = ExpSum.zero(lattice)
    for s in sums:
        total = total.add(s)
    return total
