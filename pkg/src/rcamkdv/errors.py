"""Exception hierarchy shared by the solver, the evaluators and the CLI.

Every error carries a machine-readable ``kind`` and the process exit code the
CLI uses when the error escapes a command.
"""

from typing import Any, ClassVar

from pydantic import ValidationError


class ExitCode:
    """Process exit codes of the CLI."""

    SUCCESS = 0
    INTERNAL = 1
    VERIFICATION_FAILURE = 2
    INPUT_ERROR = 3
    NUMERIC_RANGE = 4


class RcamError(Exception):
    """Base class for all rcamkdv errors."""

    kind: ClassVar[str] = "internal-error"
    exit_code: ClassVar[int] = ExitCode.INTERNAL

    def __init__(self, message: str, **details: Any) -> None:
        super().__init__(message)
        self.details = details

    @property
    def error_kind(self) -> str:
        return self.kind

    def to_dict(self) -> dict[str, Any]:
        """Return the single JSON object emitted on standard error."""
        return {"error": self.error_kind, "message": str(self), **self.details}


class InputError(RcamError):
    kind = "input-error"
    exit_code = ExitCode.INPUT_ERROR


class ParamsError(InputError):
    """Invalid parameter set. The kind is taken from the failing validator."""

    kind = "invalid-params"

    def __init__(self, message: str, kind: str | None = None, **details: Any) -> None:
        super().__init__(message, **details)
        self._kind = kind or type(self).kind

    @property
    def error_kind(self) -> str:
        return self._kind

    @classmethod
    def from_validation(cls, exc: ValidationError, **details: Any) -> "ParamsError":
        """Convert a pydantic validation failure, keeping the first custom error type as kind."""
        errors = exc.errors()
        first = errors[0] if errors else {}
        kind = str(first.get("type", cls.kind))
        if kind in ("value_error", "missing", "float_parsing", "greater_than", "less_than_equal", "finite_number"):
            kind = cls.kind
        location = ".".join(str(part) for part in first.get("loc", ()))
        message = str(first.get("msg", str(exc)))
        if location:
            message = f"{location}: {message}"
        return cls(message, kind=kind, **details)


class ResonanceError(InputError):
    """An exponent hits a root of the linear operator (mu * (mu^2 - lambda^2) ~ 0).

    When several keys are resonant, ``details["key"]`` is the smallest one in (m, n) order.
    """

    kind = "resonance"


class DomainError(InputError):
    """A point lies outside x > 0, t > 0."""

    kind = "domain-error"


class UnclassifiableCaseError(InputError):
    kind = "unclassifiable-case"


class TableFormatError(InputError):
    kind = "table-format"


class InsufficientSamplesError(InputError):
    kind = "insufficient-samples"


class UnboundedParametersError(InputError):
    """Parameters match none of the bounded sub-cases and no override was given."""

    kind = "unbounded-parameters"


class IterationCapError(InputError):
    kind = "iteration-cap"


class NumericRangeError(RcamError):
    kind = "numeric-range"
    exit_code = ExitCode.NUMERIC_RANGE


class EvaluationRangeError(NumericRangeError):
    """An exponent exceeds the overflow guard."""

    kind = "evaluation-range"


class VanishingDenominatorError(NumericRangeError):
    kind = "vanishing-denominator"


class StencilDomainError(NumericRangeError):
    """A finite-difference stencil touched a point where the solution is undefined."""

    kind = "stencil-domain"


class VerificationError(RcamError):
    kind = "verification-failure"
    exit_code = ExitCode.VERIFICATION_FAILURE


class LatticeMismatchError(RcamError):
    """Two exponential sums built on different (lambda1, lambda2) lattices were combined."""

    kind = "context-mismatch"


class ClassificationDisagreementError(RcamError):
    kind = "classification-disagreement"


class UnsupportedLeadingCaseError(RcamError, NotImplementedError):
    kind = "unsupported-leading-case"
