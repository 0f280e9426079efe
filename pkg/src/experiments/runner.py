"""
Experiment catalogue: the replication tables and the plot data behind the figures.

Every cell of an experiment shares the experiment's master seed, so estimators
compared within one table see the same simulated samples.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import pandas as pd

from ..core.config import AppConfig
from ..estimation.estimators import Method
from ..simulation.dgp import DgpConfig, EtaShape, Variant
from ..simulation.harness import CellReport, CellSpec, qq_data, run_cell
from ..simulation.theory import (
    attenuation_kappa,
    sharp_bound,
    theoretical_bias,
    theory_report,
    true_vstar,
    variance_weighted_tau,
)
from .reports import ExperimentResult

logger = logging.getLogger(__name__)

TABLE1_SIZES = (500, 1000, 5000)
BOUNDARY_SIGMAS = (0.5, 0.25, 0.1, 0.05, 0.01, 0.005, 0.001)
MISCALIBRATION_SHAPES = (EtaShape.WORST_CASE, EtaShape.LINEAR, EtaShape.SYMMETRIC)
MISCALIBRATION_DELTAS = (0.05, 0.10, 0.15, 0.20)
BIAS_CURVE_DELTAS = (0.0, 0.025, 0.05, 0.075, 0.10, 0.125, 0.15, 0.175, 0.20)
THRESHOLD_SIGMAS = (0.10, 0.20, 0.30)
HETERO_SIZES = (500, 1000, 5000)
WEIGHTED_CURVE_SIZES = (250, 500, 1000, 2000, 5000)
DESIGN_SIGMAS = {Variant.HETERO_A: 0.30, Variant.HETERO_B: 0.20}


class ExperimentId(str, Enum):
    TABLE1 = "table1"
    TABLE2 = "table2"
    TABLE3 = "table3"
    TABLE4 = "table4"
    TABLE5 = "table5"
    FIGURE_QQ = "figure_qq"
    FIGURE_BOUNDARY = "figure_boundary"
    FIGURE_BIAS = "figure_bias"
    FIGURE_ATTENUATION = "figure_attenuation"
    FIGURE_WEIGHTED = "figure_weighted"


@dataclass
class RunSettings:
    reps: int
    seed: int
    threads: int
    ridge_lambda: float
    folds: int
    alpha: float
    mc_points: int

    @classmethod
    def from_config(
        cls,
        config: AppConfig,
        reps: Optional[int] = None,
        seed: Optional[int] = None,
        threads: Optional[int] = None,
    ) -> "RunSettings":
        return cls(
            reps=reps if reps is not None else config.simulation.reps,
            seed=seed if seed is not None else config.seed,
            threads=threads if threads is not None else config.simulation.threads,
            ridge_lambda=config.simulation.ridge_lambda,
            folds=config.estimation.folds,
            alpha=config.estimation.alpha,
            mc_points=config.simulation.mc_points,
        )

    def to_dict(self) -> dict:
        # threads is left out: it never changes results
        return {
            "reps": self.reps,
            "seed": self.seed,
            "ridge_lambda": self.ridge_lambda,
            "folds": self.folds,
            "alpha": self.alpha,
            "mc_points": self.mc_points,
        }


class ExperimentRunner:
    """Runs named experiments and returns their tables and metadata."""

    def __init__(self, settings: RunSettings):
        self.settings = settings
        self._experiments: dict[ExperimentId, Callable[[], ExperimentResult]] = {
            ExperimentId.TABLE1: self.table1,
            ExperimentId.TABLE2: self.table2,
            ExperimentId.TABLE3: self.table3,
            ExperimentId.TABLE4: self.table4,
            ExperimentId.TABLE5: self.table5,
            ExperimentId.FIGURE_QQ: self.figure_qq,
            ExperimentId.FIGURE_BOUNDARY: self.figure_boundary,
            ExperimentId.FIGURE_BIAS: self.figure_bias,
            ExperimentId.FIGURE_ATTENUATION: self.figure_attenuation,
            ExperimentId.FIGURE_WEIGHTED: self.figure_weighted,
        }

    def run(self, experiment: ExperimentId) -> ExperimentResult:
        experiment = ExperimentId(experiment)
        reps = self.settings.reps
        logger.info(f"Starting experiment {experiment.value} with {reps} replications")
        result = self._experiments[experiment]()
        logger.info(f"Finished experiment {experiment.value}")
        return result

    # -- helpers -----------------------------------------------------------

    def _cell(
        self,
        dgp: DgpConfig,
        estimator: Method,
        target: float,
        label: str,
        keep_estimates: bool = False,
    ) -> CellReport:
        spec = CellSpec(
            dgp=dgp,
            estimator=estimator,
            n=dgp.n,
            reps=self.settings.reps,
            master_seed=self.settings.seed,
            target=target,
            alpha=self.settings.alpha,
            folds=self.settings.folds,
            ridge_lambda=self.settings.ridge_lambda,
            keep_estimates=keep_estimates,
            label=label,
        )
        return run_cell(spec, n_jobs=self.settings.threads)

    def _meta(self, cells: list[CellReport], **theory) -> dict:
        return {
            "settings": self.settings.to_dict(),
            "cells": [report.spec.to_dict() for report in cells],
            "theory": theory,
        }

    def _mc(self) -> dict:
        return {"mc_points": self.settings.mc_points}

    # -- tables --------------------------------------------------------------

    def _correct_specification_cells(self) -> list[CellReport]:
        cells = []
        for n in TABLE1_SIZES:
            dgp = DgpConfig(n=n)
            for method in (Method.ORACLE, Method.PLUGIN, Method.ORTHOGONAL):
                cells.append(self._cell(dgp, method, dgp.tau0, f"{method.value}/n={n}"))
        return cells

    def table1(self) -> ExperimentResult:
        """Oracle, plug-in and orthogonal estimators under correct specification."""
        cells = self._correct_specification_cells()
        rows = [
            {
                "estimator": c.spec.estimator.value,
                "n": c.spec.n,
                "bias": c.bias,
                "sd": c.sd,
                "rmse": c.rmse,
                "coverage": c.coverage,
                "mean_se": c.mean_se,
                "n_finite": c.n_finite,
                "n_failed": c.n_failed,
            }
            for c in cells
        ]
        report = theory_report(DgpConfig(), mc_points=self.settings.mc_points)
        return ExperimentResult(
            experiment=ExperimentId.TABLE1.value,
            tables={"table1": pd.DataFrame(rows)},
            meta=self._meta(cells, baseline=report.to_dict()),
        )

    def _boundary_cells(self) -> list[tuple[float, float, CellReport]]:
        cells = []
        for sigma in BOUNDARY_SIGMAS:
            dgp = DgpConfig(n=1000, sigma_u=sigma)
            v_star = true_vstar(dgp, **self._mc())
            cells.append((sigma, v_star, self._cell(dgp, Method.ORACLE, 1.0, f"sigma_u={sigma}")))
        return cells

    def table2(self) -> ExperimentResult:
        """Oracle estimator as the score noise shrinks toward the identification boundary."""
        cells = self._boundary_cells()
        rows = [
            {
                "sigma_u": sigma,
                "true_v_star": v_star,
                "bias": c.bias,
                "sd": c.sd,
                "rmse": c.rmse,
                "coverage": c.coverage,
                "n_finite": c.n_finite,
                "n_failed": c.n_failed,
            }
            for sigma, v_star, c in cells
        ]
        return ExperimentResult(
            experiment=ExperimentId.TABLE2.value,
            tables={"table2": pd.DataFrame(rows)},
            meta=self._meta([c for _, _, c in cells], true_v_star=[r["true_v_star"] for r in rows]),
        )

    def _miscalibration_rows(self, deltas: tuple[float, ...]) -> tuple[list[dict], list]:
        rows, cells = [], []
        for shape in MISCALIBRATION_SHAPES:
            for delta in deltas:
                dgp = DgpConfig(n=2000, eta_shape=shape, delta=delta)
                label = f"{shape.value}/delta={delta}"
                cell = self._cell(dgp, Method.ORACLE, dgp.tau0, label)
                bound = sharp_bound(dgp, delta, **self._mc())
                rows.append(
                    {
                        "shape": shape.value,
                        "delta": delta,
                        "emp_bias": cell.bias,
                        "theo_bias": theoretical_bias(dgp, **self._mc()),
                        "theo_bias_clipped": theoretical_bias(dgp, clipped=True, **self._mc()),
                        "sharp_bound": bound,
                        "tightness": abs(cell.bias) / bound if bound > 0.0 else float("nan"),
                        "coverage": cell.coverage,
                        "n_finite": cell.n_finite,
                    }
                )
                cells.append(cell)
        return rows, cells

    def table3(self) -> ExperimentResult:
        """Empirical bias under calibration failure against its theory and the sharp bound."""
        rows, cells = self._miscalibration_rows(MISCALIBRATION_DELTAS)
        return ExperimentResult(
            experiment=ExperimentId.TABLE3.value,
            tables={"table3": pd.DataFrame(rows)},
            meta=self._meta(cells, baseline=theory_report(DgpConfig(), **self._mc()).to_dict()),
        )

    def _threshold_cells(
        self, keep_estimates: bool = False
    ) -> list[tuple[float, float, CellReport]]:
        cells = []
        for sigma in THRESHOLD_SIGMAS:
            dgp = DgpConfig(n=1000, sigma_u=sigma, variant=Variant.SYMMETRIC_THRESHOLD)
            kappa = attenuation_kappa(dgp, **self._mc())
            for method in (Method.ORACLE, Method.PLUGIN, Method.ORTHOGONAL, Method.HARD_THRESHOLD):
                label = f"{method.value}/sigma_u={sigma}"
                cell = self._cell(dgp, method, dgp.tau0, label, keep_estimates=keep_estimates)
                cells.append((sigma, kappa, cell))
        return cells

    def table4(self) -> ExperimentResult:
        """Hard-threshold gap against the moment estimators on the symmetric design."""
        cells = self._threshold_cells()
        rows = [
            {
                "sigma_u": sigma,
                "kappa": kappa,
                "kappa_hat": c.mean_abs_z,
                "estimator": c.spec.estimator.value,
                "mean_tau": c.mean_estimate,
                "bias": c.bias,
                "rmse": c.rmse,
                "coverage": c.coverage,
                "attenuation_gap": c.mean_estimate / c.spec.target - kappa,
                "n_finite": c.n_finite,
            }
            for sigma, kappa, c in cells
        ]
        return ExperimentResult(
            experiment=ExperimentId.TABLE4.value,
            tables={"table4": pd.DataFrame(rows)},
            meta=self._meta(
                [c for _, _, c in cells],
                kappa={str(s): k for s, k, _ in cells},
            ),
        )

    def _hetero_cells(self, sizes: tuple[int, ...]) -> list[tuple[str, float, CellReport]]:
        cells = []
        for variant, sigma in DESIGN_SIGMAS.items():
            base = DgpConfig(tau0=1.0, tau1=0.5, sigma_u=sigma, variant=variant)
            tau_bar = variance_weighted_tau(base, **self._mc())
            for n in sizes:
                label = f"{variant.value}/n={n}"
                cell = self._cell(base.with_(n=n), Method.ORACLE, tau_bar, label)
                cells.append((variant.value, tau_bar, cell))
        return cells

    def table5(self) -> ExperimentResult:
        """Oracle recovery of the variance-weighted estimand under heterogeneous effects."""
        cells = self._hetero_cells(HETERO_SIZES)
        rows = [
            {
                "design": design,
                "n": c.spec.n,
                "tau_bar": tau_bar,
                "bias": c.bias,
                "sd": c.sd,
                "rmse": c.rmse,
                "coverage": c.coverage,
                "n_finite": c.n_finite,
            }
            for design, tau_bar, c in cells
        ]
        return ExperimentResult(
            experiment=ExperimentId.TABLE5.value,
            tables={"table5": pd.DataFrame(rows)},
            meta=self._meta(
                [c for _, _, c in cells],
                tau_bar={design: tau_bar for design, tau_bar, _ in cells},
            ),
        )

    # -- figures -------------------------------------------------------------

    def figure_qq(self) -> ExperimentResult:
        """Quantile pairs of standardized oracle estimates at three sample sizes."""
        tables, ks, cells = {}, {}, []
        for n in TABLE1_SIZES:
            dgp = DgpConfig(n=n)
            cell = self._cell(dgp, Method.ORACLE, dgp.tau0, f"oracle/n={n}", keep_estimates=True)
            qq = qq_data(cell.estimates, dgp.tau0, cell.ses, n)
            tables[f"figure_qq_n{n}"] = pd.DataFrame(qq.rows(), columns=["theoretical", "sample"])
            ks[str(n)] = {
                "statistic": qq.ks_statistic,
                "pvalue": qq.ks_pvalue,
                "degenerate": qq.degenerate,
            }
            cells.append(cell)
        return ExperimentResult(
            experiment=ExperimentId.FIGURE_QQ.value,
            tables=tables,
            meta=self._meta(cells, ks=ks),
        )

    def figure_boundary(self) -> ExperimentResult:
        """RMSE and coverage against V*, with the 1/V* reference anchored at the largest V*."""
        cells = self._boundary_cells()
        _, anchor_v, anchor = cells[0]
        rows = [
            {
                "sigma_u": sigma,
                "v_star": v_star,
                "rmse": c.rmse,
                "reference": anchor.rmse * anchor_v / v_star,
                "coverage": c.coverage,
            }
            for sigma, v_star, c in cells
        ]
        return ExperimentResult(
            experiment=ExperimentId.FIGURE_BOUNDARY.value,
            tables={"figure_boundary": pd.DataFrame(rows)},
            meta=self._meta([c for _, _, c in cells]),
        )

    def figure_bias(self) -> ExperimentResult:
        """Empirical and theoretical bias curves over delta for each calibration-error shape."""
        rows, cells = self._miscalibration_rows(BIAS_CURVE_DELTAS)
        columns = ["shape", "delta", "emp_bias", "theo_bias", "sharp_bound"]
        return ExperimentResult(
            experiment=ExperimentId.FIGURE_BIAS.value,
            tables={"figure_bias": pd.DataFrame(rows)[columns]},
            meta=self._meta(cells),
        )

    def figure_attenuation(self) -> ExperimentResult:
        """Sampling distributions of every estimator on the symmetric design, long form."""
        cells = self._threshold_cells(keep_estimates=True)
        rows = [
            {
                "sigma_u": sigma,
                "estimator": c.spec.estimator.value,
                "replication": i,
                "estimate": float(value),
            }
            for sigma, _, c in cells
            for i, value in enumerate(c.estimates)
        ]
        return ExperimentResult(
            experiment=ExperimentId.FIGURE_ATTENUATION.value,
            tables={"figure_attenuation": pd.DataFrame(rows)},
            meta=self._meta(
                [c for _, _, c in cells],
                kappa={str(s): k for s, k, _ in cells},
            ),
        )

    def figure_weighted(self) -> ExperimentResult:
        """RMSE against the variance-weighted estimand as n grows, per design."""
        cells = self._hetero_cells(WEIGHTED_CURVE_SIZES)
        rows = [
            {"design": design, "n": c.spec.n, "tau_bar": tau_bar, "bias": c.bias, "rmse": c.rmse}
            for design, tau_bar, c in cells
        ]
        return ExperimentResult(
            experiment=ExperimentId.FIGURE_WEIGHTED.value,
            tables={"figure_weighted": pd.DataFrame(rows)},
            meta=self._meta(
                [c for _, _, c in cells],
                tau_bar={design: tau_bar for design, tau_bar, _ in cells},
            ),
        )
