"""
Monte Carlo engine: replicate (design, estimator) cells and aggregate them.

Replication i draws from its own substream
SeedSequence(entropy=master_seed, spawn_key=(i,)), so results do not depend
on how many workers run the replications or in which order they finish.
"""
import logging
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import kstest, norm

from ..core.errors import (
    InputValidationError,
    LatentGapError,
    NonIdentificationError,
)
from ..estimation.estimators import (
    Method,
    TauEstimate,
    hard_threshold_gap,
    oracle_tau,
    orthogonal_tau,
    plugin_tau,
)
from .dgp import DgpConfig, generate, true_nuisances

logger = logging.getLogger(__name__)

MIN_QQ_POINTS = 100


@dataclass(frozen=True)
class CellSpec:
    """One simulation cell: a design, an estimator and the estimand it is judged against."""

    dgp: DgpConfig
    estimator: Method
    n: int
    reps: int
    master_seed: int
    target: float
    alpha: float = 0.05
    folds: int = 5
    ridge_lambda: float = 1.0
    keep_estimates: bool = False
    label: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "estimator", Method(self.estimator))
        if self.reps < 1:
            raise InputValidationError(f"reps must be at least 1, got {self.reps}")
        if not np.isfinite(self.target):
            raise InputValidationError(f"cell target must be finite, got {self.target}")
        if self.master_seed < 0:
            raise InputValidationError(
                f"master seed must be non-negative, got {self.master_seed}"
            )
        if self.dgp.n != self.n:
            object.__setattr__(self, "dgp", self.dgp.with_(n=self.n))

    def to_dict(self) -> dict:
        data = asdict(self)
        data["dgp"] = self.dgp.to_dict()
        data["estimator"] = self.estimator.value
        return data


@dataclass(frozen=True, eq=False)
class CellReport:
    spec: CellSpec
    bias: float
    sd: float
    rmse: float
    coverage: float
    n_finite: int
    n_failed: int
    mean_estimate: float
    mean_se: float
    mean_abs_z: float
    degenerate: bool
    estimates: Optional[np.ndarray] = field(default=None, repr=False)
    ses: Optional[np.ndarray] = field(default=None, repr=False)

    def summary(self) -> dict:
        """Scalar metrics only, in a stable key order."""
        return {
            "label": self.spec.label,
            "estimator": self.spec.estimator.value,
            "n": self.spec.n,
            "target": self.spec.target,
            "mean_estimate": self.mean_estimate,
            "bias": self.bias,
            "sd": self.sd,
            "rmse": self.rmse,
            "coverage": self.coverage,
            "mean_se": self.mean_se,
            "mean_abs_z": self.mean_abs_z,
            "n_finite": self.n_finite,
            "n_failed": self.n_failed,
            "degenerate": self.degenerate,
        }


@dataclass(frozen=True)
class _Replication:
    estimate: float
    se: float
    covers: bool
    mean_abs_z: float
    v_star: float
    ok: bool


def replication_rng(master_seed: int, index: int) -> np.random.Generator:
    """Independent stream for one replication of a cell."""
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(index,))
    return np.random.default_rng(seq)


def _estimate(spec: CellSpec, rng: np.random.Generator) -> TauEstimate:
    latent = generate(spec.dgp, rng)
    sample = latent.observed
    if spec.estimator is Method.ORACLE:
        return oracle_tau(sample, true_nuisances(spec.dgp), alpha=spec.alpha)
    if spec.estimator is Method.PLUGIN:
        return plugin_tau(sample, lam=spec.ridge_lambda, alpha=spec.alpha)
    if spec.estimator is Method.ORTHOGONAL:
        fold_seed = int(rng.integers(0, 2**32))
        return orthogonal_tau(
            sample, k=spec.folds, lam=spec.ridge_lambda, seed=fold_seed, alpha=spec.alpha
        )
    return hard_threshold_gap(sample, true_nuisances(spec.dgp), alpha=spec.alpha)


def _run_replication(spec: CellSpec, index: int) -> _Replication:
    rng = replication_rng(spec.master_seed, index)
    try:
        est = _estimate(spec, rng)
    except NonIdentificationError as e:
        logger.debug(f"replication {index} of '{spec.label}' not identified: {e}")
        return _Replication(np.nan, np.nan, False, np.nan, e.v_star, False)
    except LatentGapError as e:
        logger.debug(f"replication {index} of '{spec.label}' failed: {e}")
        return _Replication(np.nan, np.nan, False, np.nan, np.nan, False)

    ok = bool(np.isfinite(est.tau_hat) and np.isfinite(est.se))
    return _Replication(
        estimate=est.tau_hat,
        se=est.se,
        covers=est.covers(spec.target) if ok else False,
        mean_abs_z=est.mean_abs_z,
        v_star=est.v_star_hat,
        ok=ok,
    )


def run_cell(spec: CellSpec, n_jobs: int = 1) -> CellReport:
    """Run every replication of a cell and aggregate over the finite estimates."""
    name = spec.label or f"{spec.estimator.value}/n={spec.n}"
    logger.info(f"cell '{name}': {spec.reps} replications on {n_jobs} worker(s)")

    if n_jobs == 1:
        results = [_run_replication(spec, i) for i in range(spec.reps)]
    else:
        results = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(_run_replication)(spec, i) for i in range(spec.reps)
        )

    ok = np.array([rep.ok for rep in results])
    n_finite = int(ok.sum())
    n_failed = spec.reps - n_finite
    if n_finite == 0:
        v_stars = [rep.v_star for rep in results if np.isfinite(rep.v_star)]
        raise NonIdentificationError(
            v_star=float(max(v_stars)) if v_stars else 0.0,
            message=(
                f"all {spec.reps} replications of cell '{name}' failed or were not identified"
            ),
        )
    if n_failed:
        logger.warning(f"cell '{name}': excluded {n_failed} of {spec.reps} replications")

    estimates = np.array([rep.estimate for rep in results])[ok]
    ses = np.array([rep.se for rep in results])[ok]
    covers = np.array([rep.covers for rep in results])[ok]
    abs_z = np.array([rep.mean_abs_z for rep in results])[ok]

    errors = estimates - spec.target
    degenerate = n_finite == 1
    if degenerate:
        logger.warning(f"cell '{name}': a single finite replication, sd reported as 0")
    sd = 0.0 if degenerate else float(np.std(estimates, ddof=1))

    report = CellReport(
        spec=spec,
        bias=float(np.mean(errors)),
        sd=sd,
        rmse=float(np.sqrt(np.mean(errors * errors))),
        coverage=float(np.mean(covers)),
        n_finite=n_finite,
        n_failed=n_failed,
        mean_estimate=float(np.mean(estimates)),
        mean_se=float(np.mean(ses)),
        mean_abs_z=float(np.mean(abs_z)),
        degenerate=degenerate,
        estimates=estimates if spec.keep_estimates else None,
        ses=ses if spec.keep_estimates else None,
    )
    logger.info(
        f"cell '{name}': bias={report.bias:.4f} sd={report.sd:.4f} "
        f"rmse={report.rmse:.4f} coverage={report.coverage:.3f}"
    )
    return report


@dataclass(frozen=True, eq=False)
class QQData:
    sample: np.ndarray
    theoretical: np.ndarray
    ks_statistic: float
    ks_pvalue: float
    degenerate: bool

    def rows(self) -> list[dict]:
        return [
            {"theoretical": float(t), "sample": float(s)}
            for t, s in zip(self.theoretical, self.sample)
        ]


def ks_distance(standardized: np.ndarray) -> tuple[float, float]:
    """Kolmogorov-Smirnov statistic and p-value against N(0, 1)."""
    result = kstest(np.asarray(standardized, dtype=float), "norm")
    return float(result.statistic), float(result.pvalue)


def qq_data(estimates: np.ndarray, target: float, ses: np.ndarray, n: int) -> QQData:
    """Sorted sqrt(n)(tau-hat - target)/se-hat against normal quantiles at (i - 0.5)/R."""
    estimates = np.asarray(estimates, dtype=float).reshape(-1)
    ses = np.asarray(ses, dtype=float).reshape(-1)
    if estimates.shape != ses.shape:
        raise InputValidationError("estimates and standard errors must have the same length")
    if estimates.size < MIN_QQ_POINTS:
        raise InputValidationError(
            f"QQ data needs at least {MIN_QQ_POINTS} estimates, got {estimates.size}"
        )

    with np.errstate(divide="ignore", invalid="ignore"):
        standardized = np.sqrt(n) * (estimates - target) / ses
    standardized = np.sort(standardized[np.isfinite(standardized)])
    degenerate = standardized.size < MIN_QQ_POINTS or float(np.ptp(standardized)) == 0.0
    if degenerate:
        logger.warning("QQ column is degenerate (constant or too few finite values)")

    count = standardized.size
    theoretical = norm.ppf((np.arange(1, count + 1) - 0.5) / count)
    statistic, pvalue = ks_distance(standardized) if count else (float("nan"), float("nan"))
    return QQData(
        sample=standardized,
        theoretical=theoretical,
        ks_statistic=statistic,
        ks_pvalue=pvalue,
        degenerate=degenerate,
    )
