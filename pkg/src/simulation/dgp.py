"""
Synthetic data generators.

Every generator draws, in order, covariates X, the score p, the latent G and
the outcome noise from one explicit `numpy.random.Generator`, so a fixed
(config, seed) reproduces the same sample bit for bit.

Outcome model for all variants:

    mu(X) = beta_m . X - tau(X) r(X)
    Y     = mu(X) + tau(X) G + eps

so the true nuisance m(X) = E[Y | X] = beta_m . X under calibration.
"""
import logging
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np
from scipy.special import expit
from scipy.stats import linregress

from ..core.errors import InputValidationError
from ..core.sample import NuisancePair, ObservedSample

logger = logging.getLogger(__name__)

DEFAULT_BETA_R = 0.4
DEFAULT_BETA_M = (1.0, -0.5, 0.25)
R_CLAMP = 1e-6
DESIGN_B_SLOPE = 0.8
DESIGN_B_CAP = 0.9


class Variant(str, Enum):
    BASELINE = "baseline"
    SYMMETRIC_THRESHOLD = "symmetric_threshold"
    HETERO_A = "hetero_A"
    HETERO_B = "hetero_B"


class EtaShape(str, Enum):
    NONE = "none"
    WORST_CASE = "worst_case"
    LINEAR = "linear"
    SYMMETRIC = "symmetric"


HETEROGENEOUS = (Variant.HETERO_A, Variant.HETERO_B)


@dataclass(frozen=True)
class DgpConfig:
    """Parameters of one synthetic design.

    sigma_u = 0 is accepted as the degenerate boundary p = r(X).
    """

    n: int = 1000
    tau0: float = 1.0
    tau1: float = 0.0
    sigma_u: float = 0.30
    beta_r: Optional[tuple[float, ...]] = None
    beta_m: Optional[tuple[float, ...]] = None
    d: int = 3
    noise_sd: float = 1.0
    eta_shape: EtaShape = EtaShape.NONE
    delta: float = 0.0
    variant: Variant = Variant.BASELINE

    def __post_init__(self) -> None:
        object.__setattr__(self, "eta_shape", EtaShape(self.eta_shape))
        object.__setattr__(self, "variant", Variant(self.variant))
        if self.beta_r is None:
            object.__setattr__(self, "beta_r", (DEFAULT_BETA_R,) * self.d)
        if self.beta_m is None:
            beta_m = tuple(DEFAULT_BETA_M[i % len(DEFAULT_BETA_M)] for i in range(self.d))
            object.__setattr__(self, "beta_m", beta_m)
        object.__setattr__(self, "beta_r", tuple(float(b) for b in self.beta_r))
        object.__setattr__(self, "beta_m", tuple(float(b) for b in self.beta_m))

        if self.n < 1:
            raise InputValidationError(f"n must be positive, got {self.n}")
        if self.d < 1:
            raise InputValidationError(f"covariate dimension must be positive, got {self.d}")
        if not 0.0 <= self.sigma_u < 1.0:
            raise InputValidationError(f"sigma_u must lie in [0, 1), got {self.sigma_u}")
        if not self.noise_sd > 0.0:
            raise InputValidationError(f"noise_sd must be positive, got {self.noise_sd}")
        if len(self.beta_r) != self.d or len(self.beta_m) != self.d:
            raise InputValidationError(
                f"beta_r and beta_m need {self.d} entries, got "
                f"{len(self.beta_r)} and {len(self.beta_m)}"
            )
        if not self.delta >= 0.0:
            raise InputValidationError(f"delta must be non-negative, got {self.delta}")
        if self.eta_shape is EtaShape.NONE and self.delta != 0.0:
            raise InputValidationError("delta must be 0 when eta_shape is 'none'")
        if self.eta_shape is not EtaShape.NONE and self.variant is not Variant.BASELINE:
            raise InputValidationError("calibration error is only defined for the baseline variant")
        if self.tau1 != 0.0 and self.variant not in HETEROGENEOUS:
            raise InputValidationError("tau1 != 0 requires a heterogeneous variant")

    def with_(self, **changes) -> "DgpConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["eta_shape"] = self.eta_shape.value
        data["variant"] = self.variant.value
        data["beta_r"] = list(self.beta_r)
        data["beta_m"] = list(self.beta_m)
        return data


def covariates(cfg: DgpConfig, n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal((n, cfg.d))


def score_mean(cfg: DgpConfig, x: np.ndarray) -> np.ndarray:
    """r(X), clamped away from 0 and 1."""
    if cfg.variant is Variant.SYMMETRIC_THRESHOLD:
        return np.full(x.shape[0], 0.5)
    r = expit(x @ np.asarray(cfg.beta_r))
    return np.clip(r, R_CLAMP, 1.0 - R_CLAMP)


def outcome_mean(cfg: DgpConfig, x: np.ndarray) -> np.ndarray:
    """m(X) = beta_m . X."""
    return x @ np.asarray(cfg.beta_m)


def structural_tau(cfg: DgpConfig, x: np.ndarray) -> np.ndarray:
    """tau(X) = tau0 + tau1 X_1."""
    return cfg.tau0 + cfg.tau1 * x[:, 0]


def score_variance(cfg: DgpConfig, x: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Realized Var(p | X) per row, after the Design-B cap."""
    base = r * (1.0 - r)
    if cfg.variant is Variant.SYMMETRIC_THRESHOLD:
        return np.full(x.shape[0], cfg.sigma_u**2 * 0.25)
    if cfg.variant is Variant.HETERO_B:
        target = cfg.sigma_u**2 * np.exp(DESIGN_B_SLOPE * x[:, 0])
        return np.minimum(target, DESIGN_B_CAP * base)
    return cfg.sigma_u**2 * base


def draw_score(
    cfg: DgpConfig, r: np.ndarray, v: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """p | X ~ Beta(r c, (1 - r) c) with concentration c = r(1 - r)/v - 1."""
    if cfg.sigma_u == 0.0:
        return r.copy()
    if cfg.variant in (Variant.BASELINE, Variant.HETERO_A, Variant.SYMMETRIC_THRESHOLD):
        concentration = np.full(r.shape[0], (1.0 - cfg.sigma_u**2) / cfg.sigma_u**2)
    else:
        concentration = r * (1.0 - r) / v - 1.0
    return rng.beta(r * concentration, (1.0 - r) * concentration)


def calibration_error(shape: EtaShape, delta: float, p: np.ndarray) -> np.ndarray:
    """eta(p) for the worst-case, linear and symmetric shapes."""
    shape = EtaShape(shape)
    z = 2.0 * p - 1.0
    if shape is EtaShape.WORST_CASE:
        return delta * np.sign(z)
    if shape is EtaShape.LINEAR:
        return delta * z
    if shape is EtaShape.SYMMETRIC:
        return delta * np.sin(np.pi * p)
    return np.zeros_like(p)


@dataclass(frozen=True)
class _LinearOutcomeMean:
    cfg: DgpConfig

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return outcome_mean(self.cfg, np.atleast_2d(x))


@dataclass(frozen=True)
class _ScoreMean:
    cfg: DgpConfig

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return score_mean(self.cfg, np.atleast_2d(x))


def true_nuisances(cfg: DgpConfig) -> NuisancePair:
    """The generator's own m(X) and r(X)."""
    return NuisancePair(m=_LinearOutcomeMean(cfg), r=_ScoreMean(cfg))


@dataclass(frozen=True, eq=False)
class LatentSample:
    """An observed sample together with the simulated latent quantities."""

    observed: ObservedSample
    g: np.ndarray
    true_m: np.ndarray
    true_r: np.ndarray
    true_mu: np.ndarray
    tau_of_x: np.ndarray
    score_var: np.ndarray
    config: DgpConfig = field(default_factory=DgpConfig)

    @property
    def n(self) -> int:
        return self.observed.n

    def true_nuisances(self) -> NuisancePair:
        return true_nuisances(self.config)


def _assemble(
    cfg: DgpConfig,
    x: np.ndarray,
    r: np.ndarray,
    v: np.ndarray,
    p: np.ndarray,
    g_prob: np.ndarray,
    rng: np.random.Generator,
) -> LatentSample:
    g = (rng.random(cfg.n) < g_prob).astype(float)
    eps = rng.normal(0.0, cfg.noise_sd, cfg.n)
    tau_x = structural_tau(cfg, x)
    m = outcome_mean(cfg, x)
    mu = m - tau_x * r
    y = mu + tau_x * g + eps
    return LatentSample(
        observed=ObservedSample(y=y, x=x, p=p),
        g=g,
        true_m=m,
        true_r=r,
        true_mu=mu,
        tau_of_x=tau_x,
        score_var=v,
        config=cfg,
    )


def _draw_design(cfg: DgpConfig, rng: np.random.Generator):
    x = covariates(cfg, cfg.n, rng)
    r = score_mean(cfg, x)
    v = score_variance(cfg, x, r)
    p = draw_score(cfg, r, v, rng)
    return x, r, v, p


def _require(cfg: DgpConfig, variants: tuple[Variant, ...], generator: str) -> None:
    if cfg.variant not in variants:
        allowed = ", ".join(v.value for v in variants)
        raise InputValidationError(
            f"{generator} needs variant in {{{allowed}}}, got '{cfg.variant.value}'"
        )


def baseline_sample(cfg: DgpConfig, rng: np.random.Generator) -> LatentSample:
    """Logistic r(X), linear m(X), Beta score with Var(p|X) = sigma_u^2 r(1-r)."""
    _require(cfg, (Variant.BASELINE,), "baseline_sample")
    if cfg.eta_shape is not EtaShape.NONE:
        raise InputValidationError("baseline_sample is calibrated; use miscalibrated_sample")
    x, r, v, p = _draw_design(cfg, rng)
    return _assemble(cfg, x, r, v, p, p, rng)


def miscalibrated_sample(cfg: DgpConfig, rng: np.random.Generator) -> LatentSample:
    """Baseline design with G ~ Bernoulli(clip(p + eta(p), 0, 1))."""
    _require(cfg, (Variant.BASELINE,), "miscalibrated_sample")
    if cfg.eta_shape is EtaShape.NONE:
        raise InputValidationError("miscalibrated_sample needs an eta_shape other than 'none'")
    x, r, v, p = _draw_design(cfg, rng)
    g_prob = np.clip(p + calibration_error(cfg.eta_shape, cfg.delta, p), 0.0, 1.0)
    return _assemble(cfg, x, r, v, p, g_prob, rng)


def symmetric_threshold_sample(cfg: DgpConfig, rng: np.random.Generator) -> LatentSample:
    """r(X) = 1/2 and p ~ Beta(c/2, c/2), symmetric about 1/2 given X."""
    _require(cfg, (Variant.SYMMETRIC_THRESHOLD,), "symmetric_threshold_sample")
    x, r, v, p = _draw_design(cfg, rng)
    return _assemble(cfg, x, r, v, p, p, rng)


def heterogeneous_sample(cfg: DgpConfig, rng: np.random.Generator) -> LatentSample:
    """tau(X) = tau0 + tau1 X_1 with constant (A) or X_1-varying (B) score variance."""
    _require(cfg, HETEROGENEOUS, "heterogeneous_sample")
    x, r, v, p = _draw_design(cfg, rng)
    if cfg.variant is Variant.HETERO_B:
        capped = int(np.count_nonzero(v < cfg.sigma_u**2 * np.exp(DESIGN_B_SLOPE * x[:, 0])))
        if capped:
            logger.debug(f"Design B variance cap binds on {capped} of {cfg.n} rows")
    return _assemble(cfg, x, r, v, p, p, rng)


def generate(cfg: DgpConfig, rng: np.random.Generator) -> LatentSample:
    """Dispatch to the generator matching the config's variant and eta shape."""
    if cfg.variant is Variant.SYMMETRIC_THRESHOLD:
        return symmetric_threshold_sample(cfg, rng)
    if cfg.variant in HETEROGENEOUS:
        return heterogeneous_sample(cfg, rng)
    if cfg.eta_shape is not EtaShape.NONE:
        return miscalibrated_sample(cfg, rng)
    return baseline_sample(cfg, rng)


def equivalence_construction(
    sample: LatentSample, tau_prime: float, rng: np.random.Generator
) -> LatentSample:
    """Observationally equivalent model with coefficient tau_prime.

    Keeps (Y, X, p), re-draws G' = 1{U <= p} with independent U ~ Uniform(0, 1)
    and sets mu'(X) = m(X) - tau_prime r(X).
    """
    u = rng.random(sample.n)
    g_prime = (u <= sample.observed.p).astype(float)
    return LatentSample(
        observed=sample.observed,
        g=g_prime,
        true_m=sample.true_m,
        true_r=sample.true_r,
        true_mu=sample.true_m - tau_prime * sample.true_r,
        tau_of_x=np.full(sample.n, float(tau_prime)),
        score_var=sample.score_var,
        config=sample.config.with_(tau0=float(tau_prime), tau1=0.0),
    )


def residual_regression_slope(sample: LatentSample) -> float:
    """OLS slope of R = Y - m(X) on the latent deviation G - r(X)."""
    resid = sample.observed.y - sample.true_m
    return float(linregress(sample.g - sample.true_r, resid).slope)


def first_stage_slope(sample: LatentSample) -> float:
    """OLS slope of G - r(X) on the score residual a = p - r(X); 1 under calibration."""
    a = sample.observed.p - sample.true_r
    return float(linregress(a, sample.g - sample.true_r).slope)


# -- finite-support enumeration fixture ------------------------------------


@dataclass(frozen=True, eq=False)
class FiniteDistribution:
    """A joint law of (X, p, G, eps) on finitely many atoms.

    Y = mu(X) + tau(X) G + eps at each atom; `prob` holds the atom masses.
    """

    x: np.ndarray
    p: np.ndarray
    g: np.ndarray
    eps: np.ndarray
    mu: np.ndarray
    tau_of_x: np.ndarray
    prob: np.ndarray

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float)
        object.__setattr__(self, "x", x.reshape(-1, 1) if x.ndim == 1 else x)
        for name in ("p", "g", "eps", "mu", "tau_of_x", "prob"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        k = self.x.shape[0]
        for name in ("p", "g", "eps", "mu", "tau_of_x", "prob"):
            if getattr(self, name).shape != (k,):
                raise InputValidationError(f"atom array '{name}' must have {k} entries")
        if np.any(self.prob < 0.0):
            raise InputValidationError("atom probabilities must be non-negative")

    @property
    def y(self) -> np.ndarray:
        return self.mu + self.tau_of_x * self.g + self.eps

    @property
    def atoms(self) -> int:
        return int(self.prob.shape[0])

    def observed(self) -> ObservedSample:
        """The atoms as rows of an ObservedSample (use `prob` as weights)."""
        return ObservedSample(y=self.y, x=self.x, p=self.p)

    def expectation(self, values: np.ndarray) -> float:
        return float(np.sum(self.prob * values))

    def x_groups(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct covariate rows and the group index of every atom."""
        return np.unique(self.x, axis=0, return_inverse=True)

    def conditional_mean(self, values: np.ndarray) -> np.ndarray:
        """E[values | X] evaluated at every atom."""
        _, group = self.x_groups()
        group = group.reshape(-1)
        mass = np.bincount(group, weights=self.prob)
        total = np.bincount(group, weights=self.prob * values)
        return (total / mass)[group]

    def true_nuisances(self) -> NuisancePair:
        """Exact m(x) = E[Y|X=x] and r(x) = E[p|X=x] as lookup tables."""
        keys, group = self.x_groups()
        group = group.reshape(-1)
        m_atoms, r_atoms = self.conditional_mean(self.y), self.conditional_mean(self.p)
        m_table = {tuple(keys[j]): m_atoms[group == j][0] for j in range(keys.shape[0])}
        r_table = {tuple(keys[j]): r_atoms[group == j][0] for j in range(keys.shape[0])}
        return NuisancePair(m=_LookupTable(m_table), r=_LookupTable(r_table))


@dataclass(frozen=True)
class _LookupTable:
    table: dict

    def __call__(self, x: np.ndarray) -> np.ndarray:
        rows = np.atleast_2d(x)
        return np.array([self.table.get(tuple(row), np.nan) for row in rows], dtype=float)


def calibrated_finite_distribution(
    x_probs: dict[float, float],
    p_given_x: dict[float, list[tuple[float, float]]],
    mu: dict[float, float],
    tau: float,
    eps: list[tuple[float, float]],
) -> FiniteDistribution:
    """Build atoms for scalar X with G | p ~ Bernoulli(p)."""
    rows = []
    for x_val, px in x_probs.items():
        for p_val, pp in p_given_x[x_val]:
            for g_val, pg in ((1.0, p_val), (0.0, 1.0 - p_val)):
                for e_val, pe in eps:
                    rows.append((x_val, p_val, g_val, e_val, mu[x_val], px * pp * pg * pe))
    atoms = np.array(rows, dtype=float)
    return FiniteDistribution(
        x=atoms[:, 0],
        p=atoms[:, 1],
        g=atoms[:, 2],
        eps=atoms[:, 3],
        mu=atoms[:, 4],
        tau_of_x=np.full(atoms.shape[0], float(tau)),
        prob=atoms[:, 5],
    )


def finite_support_distribution() -> FiniteDistribution:
    """The canonical 16-atom distribution.

    X in {0, 1} equiprobable; p | X=0 in {0.2, 0.4}, p | X=1 in {0.6, 0.8};
    G | p ~ Bernoulli(p); mu(0)=0, mu(1)=1; tau=2; eps in {-1, +1}.
    Implies r(0)=0.3, r(1)=0.7, V*=0.01, E|z|=0.4, m(0)=0.6, m(1)=2.4.
    """
    return calibrated_finite_distribution(
        x_probs={0.0: 0.5, 1.0: 0.5},
        p_given_x={0.0: [(0.2, 0.5), (0.4, 0.5)], 1.0: [(0.6, 0.5), (0.8, 0.5)]},
        mu={0.0: 0.0, 1.0: 1.0},
        tau=2.0,
        eps=[(-1.0, 0.5), (1.0, 0.5)],
    )
