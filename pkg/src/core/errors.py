"""
Exception hierarchy shared by every latentgap module.
"""
from typing import Optional

NON_IDENTIFICATION_TOL = 1e-12


class LatentGapError(Exception):
    """Base class for all latentgap errors."""


class InputValidationError(LatentGapError, ValueError):
    """Malformed input data, bad configuration or a violated precondition."""

    def __init__(
        self,
        message: str,
        row: Optional[int] = None,
        column: Optional[str] = None,
    ):
        super().__init__(message)
        self.row = row
        self.column = column


class NonIdentificationError(LatentGapError):
    """The residual score variance is (numerically) zero, so tau is not identified."""

    def __init__(self, v_star: float, message: Optional[str] = None):
        if message is None:
            message = (
                f"tau is not identified: residual score variance V* = {v_star:.3e} "
                f"<= {NON_IDENTIFICATION_TOL:g}; the score p is (numerically) a "
                "deterministic function of the covariates X"
            )
        super().__init__(message)
        self.v_star = v_star


class NuisanceEvaluationError(LatentGapError):
    """A nuisance function returned a non-finite value."""

    def __init__(self, name: str, row: int, value: float):
        super().__init__(f"nuisance '{name}' returned non-finite value {value!r} at row {row}")
        self.name = name
        self.row = row
        self.value = value


class NumericalError(LatentGapError):
    """Internal numeric failure (e.g. a singular normal-equation system)."""


def check_identified(v_star: float) -> None:
    """Raise NonIdentificationError when V* is at or below the tolerance."""
    if not v_star > NON_IDENTIFICATION_TOL:
        raise NonIdentificationError(float(v_star))
