"""
Command-line entry point for latentgap.

    latentgap experiment <id> [--reps R] [--seed S] [--out DIR] [--format csv|json] [--threads T]
    latentgap estimate <file.csv> --method plugin|orthogonal [--folds K] [--lambda L]
        [--delta D ...]
    latentgap dgp sample [flags] [--with-latent]

Exit codes: 0 success, 2 input error, 3 non-identification, 4 numeric or internal failure.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from dotenv import load_dotenv

load_dotenv()

from .core.config import AppConfig, load_config
from .core.errors import (
    InputValidationError,
    NonIdentificationError,
    NuisanceEvaluationError,
    NumericalError,
)
from .core.sample_io import read_sample_csv, write_sample_csv
from .estimation.estimators import Method, orthogonal_tau, plugin_tau, sensitivity_band
from .experiments.reports import ReportFormat, dump_json, write_result
from .experiments.runner import ExperimentId, ExperimentRunner, RunSettings
from .simulation.dgp import DgpConfig, EtaShape, Variant, generate

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NON_IDENTIFIED = 3
EXIT_NUMERIC = 4

ESTIMATE_METHODS = (Method.PLUGIN.value, Method.ORTHOGONAL.value)


class LatentGapApp:
    """Runs the CLI commands against one loaded configuration."""

    def __init__(self, config: AppConfig):
        self.config = config

    def experiment(self, args: argparse.Namespace) -> None:
        """Run a replication table or figure and write its reports."""
        settings = RunSettings.from_config(
            self.config, reps=args.reps, seed=args.seed, threads=args.threads
        )
        if settings.reps < 1:
            raise InputValidationError(f"--reps must be at least 1, got {settings.reps}")
        if settings.threads < 1:
            raise InputValidationError(f"--threads must be at least 1, got {settings.threads}")
        result = ExperimentRunner(settings).run(ExperimentId(args.id))
        out_dir = Path(args.out or self.config.output.out_dir)
        fmt = ReportFormat(args.format or self.config.output.format)
        for path in write_result(result, out_dir, fmt):
            print(path)

    def estimate(self, args: argparse.Namespace) -> None:
        """Estimate tau on a user CSV and emit a JSON report."""
        est_cfg = self.config.estimation
        folds = args.folds if args.folds is not None else est_cfg.folds
        lam = args.ridge_lambda if args.ridge_lambda is not None else est_cfg.ridge_lambda
        alpha = args.alpha if args.alpha is not None else est_cfg.alpha
        seed = args.seed if args.seed is not None else self.config.seed

        sample = read_sample_csv(Path(args.input))
        method = Method(args.method)
        if method is Method.ORTHOGONAL:
            estimate = orthogonal_tau(
                sample, k=folds, lam=lam, seed=seed, alpha=alpha, n_jobs=args.threads
            )
        else:
            estimate = plugin_tau(sample, lam=lam, alpha=alpha)

        bands = [sensitivity_band(estimate, d) for d in args.delta]
        report = {
            "input": str(args.input),
            **estimate.to_dict(),
            "settings": {
                "folds": folds if method is Method.ORTHOGONAL else None,
                "lambda": lam,
                "seed": seed if method is Method.ORTHOGONAL else None,
            },
            "sensitivity": [
                {"delta": b.delta, "half_width": b.half_width, "low": b.low, "high": b.high}
                for b in bands
            ],
        }
        text = dump_json(report)
        if args.out:
            path = Path(args.out)
            try:
                path.parent.mkdir(parents=True, exist_ok=True)
                path.write_text(text, encoding="utf-8", newline="\n")
            except OSError as e:
                raise InputValidationError(f"cannot write '{path}': {e}") from e
            logger.info(f"wrote {path}")
        else:
            sys.stdout.write(text)

    def dgp_sample(self, args: argparse.Namespace) -> None:
        """Draw one synthetic sample and write it with a config sidecar."""
        seed = args.seed if args.seed is not None else self.config.seed
        cfg = DgpConfig(
            n=args.n,
            tau0=args.tau0,
            tau1=args.tau1,
            sigma_u=args.sigma_u,
            d=args.d,
            noise_sd=args.noise_sd,
            eta_shape=EtaShape(args.eta_shape),
            delta=args.delta,
            variant=Variant(args.variant),
        )
        latent = generate(cfg, np.random.default_rng(seed))
        extra = None
        if args.with_latent:
            extra = {"g": latent.g, "true_m": latent.true_m, "true_r": latent.true_r}
        out = write_sample_csv(latent.observed, Path(args.out), extra)
        sidecar = out.with_name(f"{out.stem}.meta.json")
        payload = {"config": cfg.to_dict(), "seed": seed, "with_latent": bool(args.with_latent)}
        try:
            sidecar.write_text(dump_json(payload), encoding="utf-8", newline="\n")
        except OSError as e:
            raise InputValidationError(f"cannot write '{sidecar}': {e}") from e
        print(out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latentgap",
        description="Estimate latent-group effects from calibrated probability scores",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    exp = sub.add_parser("experiment", help="run a replication table or figure")
    exp.add_argument("id", choices=[e.value for e in ExperimentId])
    exp.add_argument("--reps", type=int, default=None, help="replications per cell")
    exp.add_argument("--seed", type=int, default=None, help="master seed")
    exp.add_argument("--out", default=None, help="output directory")
    exp.add_argument("--format", choices=[f.value for f in ReportFormat], default=None)
    exp.add_argument("--threads", type=int, default=None, help="worker threads")
    exp.set_defaults(func=LatentGapApp.experiment)

    est = sub.add_parser("estimate", help="estimate tau on a y,p,x1..xd CSV")
    est.add_argument("input", help="CSV with header y,p,x1,...,xd")
    est.add_argument("--method", choices=ESTIMATE_METHODS, required=True)
    est.add_argument("--folds", type=int, default=None)
    est.add_argument("--lambda", dest="ridge_lambda", type=float, default=None)
    est.add_argument("--alpha", type=float, default=None)
    est.add_argument("--delta", type=float, nargs="+", default=[], help="sensitivity levels")
    est.add_argument("--seed", type=int, default=None, help="fold-assignment seed")
    est.add_argument("--threads", type=int, default=1)
    est.add_argument("--out", default=None, help="write the JSON report here instead of stdout")
    est.set_defaults(func=LatentGapApp.estimate)

    dgp = sub.add_parser("dgp", help="synthetic data generation")
    dgp_sub = dgp.add_subparsers(dest="dgp_command", required=True)
    smp = dgp_sub.add_parser("sample", help="write one synthetic sample as CSV")
    smp.add_argument("--n", type=int, default=1000)
    smp.add_argument("--tau0", type=float, default=1.0)
    smp.add_argument("--tau1", type=float, default=0.0)
    smp.add_argument("--sigma-u", dest="sigma_u", type=float, default=0.30)
    smp.add_argument("--d", type=int, default=3)
    smp.add_argument("--noise-sd", dest="noise_sd", type=float, default=1.0)
    smp.add_argument("--variant", choices=[v.value for v in Variant], default="baseline")
    smp.add_argument(
        "--eta-shape", dest="eta_shape", choices=[s.value for s in EtaShape], default="none"
    )
    smp.add_argument("--delta", type=float, default=0.0)
    smp.add_argument("--seed", type=int, default=None)
    smp.add_argument("--out", default="sample.csv")
    smp.add_argument("--with-latent", dest="with_latent", action="store_true")
    smp.set_defaults(func=LatentGapApp.dgp_sample)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, run one command and return its exit code."""
    config = load_config()
    logging.basicConfig(
        level=getattr(logging, config.log_level.upper(), logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    args = build_parser().parse_args(argv)
    app = LatentGapApp(config)

    try:
        args.func(app, args)
    except InputValidationError as e:
        logger.error(f"Input error: {e}")
        return EXIT_INPUT
    except NonIdentificationError as e:
        logger.error(f"Not identified: {e}")
        return EXIT_NON_IDENTIFIED
    except (NuisanceEvaluationError, NumericalError) as e:
        logger.error(f"Numerical failure: {e}")
        return EXIT_NUMERIC
    except Exception as e:
        logger.exception(f"Fatal error: {e}")
        return EXIT_NUMERIC
    return EXIT_OK


def run() -> None:
    """Entry point for the application."""
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        sys.exit(1)


if __name__ == "__main__":
    run()
