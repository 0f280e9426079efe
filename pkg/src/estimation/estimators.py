"""
Estimators for the latent-group coefficient tau.

Four estimators share one set of derived quantities (z, R, a):

- oracle:          mean(z R) / (2 mean(a^2)) at the true nuisances
- plugin:          the same ratio at full-sample, in-sample ridge nuisances
- orthogonal:      mean(a R) / mean(a^2) at cross-fitted ridge nuisances
- hard_threshold:  mean(R | p > 1/2) - mean(R | p <= 1/2)

Standard errors are sandwich-form: sqrt(mean(score^2)) / J with Jacobian J = 2 V*.
`TauEstimate.se` is the asymptotic standard deviation; the Wald half-width is
z_{1-alpha/2} * se / sqrt(n).
"""
import logging
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np
from scipy.stats import norm

from ..core.errors import InputValidationError, check_identified
from ..core.sample import NuisancePair, ObservedSample, derive, residual_variance
from .nuisance import NuisanceFitter, cross_fit, fit_nuisances, kfold_split

logger = logging.getLogger(__name__)


class Method(str, Enum):
    ORACLE = "oracle"
    PLUGIN = "plugin"
    ORTHOGONAL = "orthogonal"
    HARD_THRESHOLD = "hard_threshold"


class ScoreKind(str, Enum):
    PSI = "psi"
    PSI_TILDE = "psi_tilde"


class Direction(str, Enum):
    M = "m"
    R = "r"


@dataclass(frozen=True)
class TauEstimate:
    tau_hat: float
    se: float
    ci_low: float
    ci_high: float
    v_star_hat: float
    n: int
    method: Method
    alpha: float = 0.05
    mean_abs_z: float = float("nan")

    @property
    def std_error(self) -> float:
        """Standard error of tau_hat itself, se / sqrt(n)."""
        return self.se / np.sqrt(self.n)

    def covers(self, target: float) -> bool:
        return bool(self.ci_low <= target <= self.ci_high)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["method"] = self.method.value
        data["std_error"] = self.std_error
        return data


@dataclass(frozen=True)
class SensitivityBand:
    delta: float
    half_width: float
    low: float
    high: float


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise InputValidationError(f"alpha must lie in (0, 1), got {alpha}")


def wald_interval(tau_hat: float, se: float, n: int, alpha: float) -> tuple[float, float]:
    """tau_hat -/+ z_{1-alpha/2} * se / sqrt(n)."""
    _check_alpha(alpha)
    half = float(norm.ppf(1.0 - alpha / 2.0)) * se / np.sqrt(n)
    return tau_hat - half, tau_hat + half


def _estimate(
    tau_hat: float,
    se: float,
    v_star: float,
    sample: ObservedSample,
    method: Method,
    alpha: float,
) -> TauEstimate:
    ci_low, ci_high = wald_interval(tau_hat, se, sample.n, alpha)
    return TauEstimate(
        tau_hat=float(tau_hat),
        se=float(se),
        ci_low=float(ci_low),
        ci_high=float(ci_high),
        v_star_hat=float(v_star),
        n=sample.n,
        method=method,
        alpha=alpha,
        mean_abs_z=float(np.mean(np.abs(2.0 * sample.p - 1.0))),
    )


def _score(
    kind: ScoreKind,
    y: np.ndarray,
    p: np.ndarray,
    m_vals: np.ndarray,
    r_vals: np.ndarray,
    tau: float,
) -> np.ndarray:
    resid = y - m_vals
    a = p - r_vals
    if kind is ScoreKind.PSI:
        return (2.0 * p - 1.0) * resid - 2.0 * tau * a * a
    return 2.0 * a * (resid - tau * a)


def score_values(
    sample: ObservedSample, nuis: NuisancePair, tau: float, kind: ScoreKind
) -> np.ndarray:
    """psi_i = z_i R_i - 2 tau a_i^2, or psi~_i = 2 a_i (R_i - tau a_i)."""
    kind = ScoreKind(kind)
    return _score(kind, sample.y, sample.p, nuis.m_values(sample.x), nuis.r_values(sample.x), tau)


def _moment_ratio(sample: ObservedSample, nuis: NuisancePair) -> tuple[float, float]:
    derived = derive(sample, nuis)
    v_star = residual_variance(derived.a)
    check_identified(v_star)
    return float(np.mean(derived.z * derived.r_resid)) / (2.0 * v_star), v_star


def sandwich_se(sample: ObservedSample, nuis: NuisancePair, tau_hat: float) -> float:
    """sqrt(mean(psi-hat^2)) / (2 mean(a^2))."""
    derived = derive(sample, nuis)
    v_star = residual_variance(derived.a)
    check_identified(v_star)
    psi = derived.z * derived.r_resid - 2.0 * tau_hat * derived.a**2
    return float(np.sqrt(np.mean(psi * psi)) / (2.0 * v_star))


def oracle_tau(sample: ObservedSample, nuis: NuisancePair, alpha: float = 0.05) -> TauEstimate:
    """Moment-ratio estimator at the true nuisance functions."""
    tau_hat, v_star = _moment_ratio(sample, nuis)
    se = sandwich_se(sample, nuis, tau_hat)
    return _estimate(tau_hat, se, v_star, sample, Method.ORACLE, alpha)


def plugin_tau(
    sample: ObservedSample,
    lam: float = 1.0,
    alpha: float = 0.05,
    fitter: Optional[NuisanceFitter] = None,
) -> TauEstimate:
    """Moment-ratio estimator at full-sample, in-sample nuisance fits.

    The standard error reuses the oracle sandwich with hats and does not
    correct for nuisance estimation noise.
    """
    nuis = (fitter or fit_nuisances)(sample, lam)
    tau_hat, v_star = _moment_ratio(sample, nuis)
    se = sandwich_se(sample, nuis, tau_hat)
    return _estimate(tau_hat, se, v_star, sample, Method.PLUGIN, alpha)


def _orthogonal_from_residuals(
    sample: ObservedSample, a: np.ndarray, resid: np.ndarray, alpha: float
) -> TauEstimate:
    v_star = residual_variance(a)
    check_identified(v_star)
    tau_hat = float(np.mean(a * resid)) / v_star
    psi_tilde = 2.0 * a * (resid - tau_hat * a)
    se = float(np.sqrt(np.mean(psi_tilde * psi_tilde)) / (2.0 * v_star))
    return _estimate(tau_hat, se, v_star, sample, Method.ORTHOGONAL, alpha)


def orthogonal_tau_from_nuisances(
    sample: ObservedSample, nuis: NuisancePair, alpha: float = 0.05
) -> TauEstimate:
    """Orthogonal-score estimator at fixed nuisances (no cross-fitting)."""
    derived = derive(sample, nuis)
    return _orthogonal_from_residuals(sample, derived.a, derived.r_resid, alpha)


def orthogonal_tau(
    sample: ObservedSample,
    k: int = 5,
    lam: float = 1.0,
    seed: int = 0,
    alpha: float = 0.05,
    fitter: Optional[NuisanceFitter] = None,
    n_jobs: int = 1,
) -> TauEstimate:
    """Orthogonal-score estimator with K-fold cross-fitted nuisances.

    tau-hat = sum a-hat_i R-hat_i / sum a-hat_i^2 using out-of-fold predictions
    only; the sandwich uses psi~ with Jacobian 2 V*-hat.
    """
    folds = kfold_split(sample.n, k, seed)
    m_hat, r_hat = cross_fit(sample, folds, lam, fitter=fitter, n_jobs=n_jobs)
    return _orthogonal_from_residuals(sample, sample.p - r_hat, sample.y - m_hat, alpha)


def hard_threshold_gap(
    sample: ObservedSample, nuis: NuisancePair, alpha: float = 0.05
) -> TauEstimate:
    """Residual-mean gap between the cells {p > 1/2} and {p <= 1/2}.

    Ties at p = 1/2 belong to the lower cell.
    """
    derived = derive(sample, nuis)
    upper = sample.p > 0.5
    cells = {"p > 1/2": derived.r_resid[upper], "p <= 1/2": derived.r_resid[~upper]}
    for name, values in cells.items():
        if values.size == 0:
            raise InputValidationError(f"hard-threshold cell {{{name}}} is empty")

    hi, lo = cells["p > 1/2"], cells["p <= 1/2"]
    gap = float(np.mean(hi) - np.mean(lo))
    var_hi = float(np.var(hi, ddof=1)) if hi.size > 1 else 0.0
    var_lo = float(np.var(lo, ddof=1)) if lo.size > 1 else 0.0
    se = float(np.sqrt(sample.n * (var_hi / hi.size + var_lo / lo.size)))
    v_star = residual_variance(derived.a)
    return _estimate(gap, se, v_star, sample, Method.HARD_THRESHOLD, alpha)


def gateaux_derivative(
    kind: ScoreKind,
    direction: Direction,
    delta_fn: Callable[[np.ndarray], np.ndarray],
    h: float,
    reference: ObservedSample,
    nuis: NuisancePair,
    tau: float,
    weights: Optional[np.ndarray] = None,
) -> float:
    """Central finite difference of E[score] along a nuisance direction.

    (E[score at nuis + h delta] - E[score at nuis - h delta]) / (2h), with the
    expectation taken over `reference` (atom probabilities in `weights`, or
    equal weights for a Monte Carlo sample). Perturbed values are not clamped.
    """
    if not 0.0 < h <= 0.1:
        raise InputValidationError(f"step h must lie in (0, 0.1], got {h}")
    kind, direction = ScoreKind(kind), Direction(direction)

    m_vals = nuis.m_values(reference.x)
    r_vals = nuis.r_values(reference.x)
    step = h * np.asarray(delta_fn(reference.x), dtype=float).reshape(-1)

    def expected(sign: float) -> float:
        if direction is Direction.M:
            m_shift, r_shift = m_vals + sign * step, r_vals
        else:
            m_shift, r_shift = m_vals, r_vals + sign * step
        scores = _score(kind, reference.y, reference.p, m_shift, r_shift, tau)
        return float(np.average(scores, weights=weights))

    return (expected(1.0) - expected(-1.0)) / (2.0 * h)


def sensitivity_band(estimate: TauEstimate, delta: float) -> SensitivityBand:
    """Worst-case bias |tau-hat| delta mean|2p-1| / (2 V*-hat) and the band around tau-hat."""
    if not delta >= 0.0:
        raise InputValidationError(f"delta must be non-negative, got {delta}")
    if not np.isfinite(estimate.mean_abs_z):
        raise InputValidationError("estimate carries no mean|2p - 1|; build it with an estimator")
    check_identified(estimate.v_star_hat)
    half = abs(estimate.tau_hat) * delta * estimate.mean_abs_z / (2.0 * estimate.v_star_hat)
    return SensitivityBand(
        delta=float(delta),
        half_width=float(half),
        low=float(estimate.tau_hat - half),
        high=float(estimate.tau_hat + half),
    )
