"""
Configuration management for latentgap.
"""
import os
from dataclasses import dataclass, field


@dataclass
class EstimationConfig:
    ridge_lambda: float = field(
        default_factory=lambda: float(os.getenv("LATENTGAP_RIDGE_LAMBDA", "1.0"))
    )
    folds: int = field(default_factory=lambda: int(os.getenv("LATENTGAP_FOLDS", "5")))
    alpha: float = field(default_factory=lambda: float(os.getenv("LATENTGAP_ALPHA", "0.05")))


@dataclass
class SimulationConfig:
    reps: int = field(default_factory=lambda: int(os.getenv("LATENTGAP_REPS", "2000")))
    threads: int = field(default_factory=lambda: int(os.getenv("LATENTGAP_THREADS", "1")))
    mc_points: int = field(
        default_factory=lambda: int(os.getenv("LATENTGAP_MC_POINTS", "1000000"))
    )
    # Penalty used inside the replication experiments.
    ridge_lambda: float = field(
        default_factory=lambda: float(os.getenv("LATENTGAP_EXPERIMENT_LAMBDA", "25.0"))
    )


@dataclass
class OutputConfig:
    out_dir: str = field(default_factory=lambda: os.getenv("LATENTGAP_OUT_DIR", "results"))
    format: str = field(default_factory=lambda: os.getenv("LATENTGAP_FORMAT", "csv"))


@dataclass
class AppConfig:
    estimation: EstimationConfig = field(default_factory=EstimationConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    seed: int = field(default_factory=lambda: int(os.getenv("LATENTGAP_SEED", "20240601")))
    log_level: str = field(default_factory=lambda: os.getenv("LATENTGAP_LOG_LEVEL", "INFO"))


def load_config() -> AppConfig:
    """Load configuration from environment variables."""
    return AppConfig()
