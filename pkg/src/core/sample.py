"""
Observed samples, nuisance pairs and the derived quantities every estimator shares.

The derived quantities for a sample (Y, X, p) and nuisance pair (m, r) are

    z = 2p - 1,    R = Y - m(X),    a = p - r(X).

All reductions go through numpy's pairwise summation.
"""
import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InputValidationError, NuisanceEvaluationError

logger = logging.getLogger(__name__)

NuisanceFunction = Callable[[np.ndarray], np.ndarray]


def _frozen(values: np.ndarray) -> np.ndarray:
    values = np.array(values, dtype=float, copy=True)
    values.setflags(write=False)
    return values


@dataclass(frozen=True, eq=False)
class ObservedSample:
    """Rows of (Y, X, p): the only data an analyst actually has."""

    y: np.ndarray
    x: np.ndarray
    p: np.ndarray

    def __post_init__(self) -> None:
        y = np.asarray(self.y, dtype=float).reshape(-1)
        p = np.asarray(self.p, dtype=float).reshape(-1)
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if x.ndim != 2:
            raise InputValidationError(f"x must be a matrix, got {x.ndim} dimensions")

        n = y.shape[0]
        if n < 1:
            raise InputValidationError("sample must contain at least one row")
        if p.shape[0] != n or x.shape[0] != n:
            raise InputValidationError(
                f"length mismatch: y has {n} rows, x has {x.shape[0]}, p has {p.shape[0]}"
            )
        bad = np.flatnonzero(~np.isfinite(y))
        if bad.size:
            row = int(bad[0])
            raise InputValidationError(f"y is not finite at row {row}", row=row, column="y")
        bad_rows, bad_cols = np.nonzero(~np.isfinite(x))
        if bad_rows.size:
            row, col = int(bad_rows[0]), int(bad_cols[0])
            raise InputValidationError(
                f"x{col + 1} is not finite at row {row}", row=row, column=f"x{col + 1}"
            )
        bad = np.flatnonzero(~((p >= 0.0) & (p <= 1.0)))
        if bad.size:
            row = int(bad[0])
            raise InputValidationError(
                f"score p must lie in [0, 1]; row {row} has p = {p[row]!r}",
                row=row,
                column="p",
            )

        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "x", _frozen(x))
        object.__setattr__(self, "p", _frozen(p))

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def d(self) -> int:
        return int(self.x.shape[1])

    def take(self, rows: np.ndarray) -> "ObservedSample":
        """Return the sub-sample at the given row indices."""
        return ObservedSample(y=self.y[rows], x=self.x[rows], p=self.p[rows])


@dataclass(frozen=True, eq=False)
class NuisancePair:
    """Evaluable conditional means m(x) = E[Y|X=x] and r(x) = E[p|X=x].

    Both callables take the full covariate matrix and return one value per row.
    Outputs of r are clamped to [0, 1] at evaluation time.
    """

    m: NuisanceFunction
    r: NuisanceFunction

    def _evaluate(self, name: str, fn: NuisanceFunction, x: np.ndarray) -> np.ndarray:
        values = np.asarray(fn(x), dtype=float).reshape(-1)
        if values.shape[0] != x.shape[0]:
            raise InputValidationError(
                f"nuisance '{name}' returned {values.shape[0]} values for {x.shape[0]} rows"
            )
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            row = int(bad[0])
            raise NuisanceEvaluationError(name, row, float(values[row]))
        return values

    def m_values(self, x: np.ndarray) -> np.ndarray:
        return self._evaluate("m", self.m, x)

    def r_values(self, x: np.ndarray) -> np.ndarray:
        return np.clip(self._evaluate("r", self.r, x), 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class DerivedQuantities:
    z: np.ndarray
    r_resid: np.ndarray
    a: np.ndarray

    @property
    def n(self) -> int:
        return int(self.z.shape[0])


def derive(sample: ObservedSample, nuis: NuisancePair) -> DerivedQuantities:
    """Compute (z, R, a) row by row for a sample and nuisance pair."""
    m_hat = nuis.m_values(sample.x)
    r_hat = nuis.r_values(sample.x)
    return DerivedQuantities(
        z=2.0 * sample.p - 1.0,
        r_resid=sample.y - m_hat,
        a=sample.p - r_hat,
    )


def residual_variance(a: np.ndarray) -> float:
    """Sample analogue of V* = E[(p - r(X))^2]."""
    a = np.asarray(a, dtype=float).reshape(-1)
    if a.size == 0:
        raise InputValidationError("residual_variance needs at least one value")
    return float(np.mean(a * a))
