"""
Nuisance estimation: degree-2 polynomial ridge regressions and K-fold splitting.

Features are standardized on the fitting split only, the intercept is left
unpenalized, and the penalized normal equations are solved directly.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from joblib import Parallel, delayed
from sklearn.model_selection import KFold

from ..core.errors import InputValidationError, NumericalError
from ..core.sample import NuisancePair, ObservedSample

logger = logging.getLogger(__name__)

SUPPORTED_DEGREE = 2

NuisanceFitter = Callable[[ObservedSample, float], NuisancePair]


def poly_features(x: np.ndarray, degree: int = SUPPORTED_DEGREE) -> np.ndarray:
    """Expand covariates into [linear terms, squares, pairwise cross-products].

    Accepts a single row (returns a vector) or an n x d matrix (returns a matrix).
    For d inputs there are d + d + d(d-1)/2 features; the intercept belongs to
    the model, not the expansion.
    """
    if degree != SUPPORTED_DEGREE:
        raise InputValidationError(
            f"only degree={SUPPORTED_DEGREE} polynomial features are supported, got {degree}"
        )
    x = np.asarray(x, dtype=float)
    single_row = x.ndim == 1
    rows = x.reshape(1, -1) if single_row else x

    d = rows.shape[1]
    left, right = np.triu_indices(d, k=1)
    features = np.hstack([rows, rows**2, rows[:, left] * rows[:, right]])
    return features[0] if single_row else features


@dataclass(frozen=True, eq=False)
class RidgeModel:
    """Ridge fit on standardized features with an unpenalized intercept."""

    weights: np.ndarray
    intercept: float
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    lam: float

    def predict(self, features: np.ndarray) -> np.ndarray:
        features = np.atleast_2d(np.asarray(features, dtype=float))
        standardized = (features - self.feature_mean) / self.feature_scale
        return self.intercept + standardized @ self.weights

    def raw_coefficients(self) -> tuple[float, np.ndarray]:
        """Intercept and slopes expressed on the unstandardized features."""
        coef = self.weights / self.feature_scale
        return float(self.intercept - np.sum(coef * self.feature_mean)), coef


def ridge_fit(features: np.ndarray, targets: np.ndarray, lam: float) -> RidgeModel:
    """Minimize sum (target - pred)^2 + lam * ||weights||^2 on standardized features."""
    features = np.atleast_2d(np.asarray(features, dtype=float))
    targets = np.asarray(targets, dtype=float).reshape(-1)
    n, k = features.shape
    if n < 2:
        raise InputValidationError(f"ridge_fit needs at least 2 rows, got {n}")
    if targets.shape[0] != n:
        raise InputValidationError(
            f"ridge_fit got {n} feature rows but {targets.shape[0]} targets"
        )
    if not lam >= 0.0:
        raise InputValidationError(f"ridge penalty must be non-negative, got {lam}")

    mean = features.mean(axis=0)
    scale = features.std(axis=0)
    # Constant columns centre to zero; keep them finite.
    scale = np.where(scale > 0.0, scale, 1.0)
    standardized = (features - mean) / scale

    target_mean = float(np.mean(targets))
    gram = standardized.T @ standardized + lam * np.eye(k)
    rhs = standardized.T @ (targets - target_mean)

    if lam == 0.0 and np.linalg.matrix_rank(gram) < k:
        raise NumericalError(
            "ridge normal equations are singular at lambda=0; use a positive penalty"
        )
    try:
        weights = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"ridge normal equations could not be solved: {e}") from e

    return RidgeModel(
        weights=weights,
        intercept=target_mean,
        feature_mean=mean,
        feature_scale=scale,
        lam=float(lam),
    )


@dataclass(frozen=True, eq=False)
class PolynomialRidge:
    """Callable nuisance: covariate matrix -> ridge prediction on degree-2 features."""

    model: RidgeModel
    degree: int = SUPPORTED_DEGREE

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.model.predict(poly_features(np.atleast_2d(x), self.degree))


def fit_nuisances(sample: ObservedSample, lam: float = 1.0) -> NuisancePair:
    """Fit m-hat on (features, y) and r-hat on (features, p)."""
    features = poly_features(sample.x)
    if sample.n < features.shape[1] + 1:
        raise InputValidationError(
            f"need at least {features.shape[1] + 1} rows to fit {features.shape[1]} "
            f"polynomial features, got {sample.n}"
        )
    m_model = ridge_fit(features, sample.y, lam)
    r_model = ridge_fit(features, sample.p, lam)
    return NuisancePair(m=PolynomialRidge(m_model), r=PolynomialRidge(r_model))


@dataclass(frozen=True, eq=False)
class FoldAssignment:
    fold_of: np.ndarray
    k: int

    def test_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == fold)

    def train_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of != fold)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.fold_of, minlength=self.k)


def kfold_split(n: int, k: int, seed: int) -> FoldAssignment:
    """Deterministic uniform random partition of range(n) into k folds."""
    if k < 2:
        raise InputValidationError(f"need at least 2 folds, got {k}")
    if k > n:
        raise InputValidationError(f"cannot split {n} rows into {k} folds")

    fold_of = np.empty(n, dtype=np.int64)
    splitter = KFold(n_splits=k, shuffle=True, random_state=int(seed) % 2**32)
    for fold, (_, test) in enumerate(splitter.split(np.zeros((n, 1)))):
        fold_of[test] = fold
    fold_of.setflags(write=False)
    return FoldAssignment(fold_of=fold_of, k=k)


def _fit_fold(
    sample: ObservedSample,
    folds: FoldAssignment,
    fold: int,
    lam: float,
    fitter: NuisanceFitter,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    train, test = folds.train_rows(fold), folds.test_rows(fold)
    nuis = fitter(sample.take(train), lam)
    x_test = sample.x[test]
    logger.debug(f"fold {fold}: trained on {train.size} rows, predicting {test.size}")
    return test, nuis.m_values(x_test), nuis.r_values(x_test)


def cross_fit(
    sample: ObservedSample,
    folds: FoldAssignment,
    lam: float,
    fitter: Optional[NuisanceFitter] = None,
    n_jobs: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Out-of-fold predictions (m-hat, r-hat) for every row.

    Results are written back by row index, so they do not depend on the order
    in which folds finish.
    """
    fitter = fitter or fit_nuisances
    if n_jobs == 1:
        parts = [_fit_fold(sample, folds, fold, lam, fitter) for fold in range(folds.k)]
    else:
        parts = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(_fit_fold)(sample, folds, fold, lam, fitter) for fold in range(folds.k)
        )

    m_hat = np.empty(sample.n)
    r_hat = np.empty(sample.n)
    for test, m_part, r_part in parts:
        m_hat[test] = m_part
        r_hat[test] = r_part
    return m_hat, r_hat
