"""
Analytic reference values for the synthetic designs.

Quantities for a `DgpConfig` are integrated by seeded Monte Carlo over the
score law; quantities for a `FiniteDistribution` are summed exactly over its
atoms by `enumeration_oracle`.
"""
import logging
from dataclasses import asdict, dataclass
from enum import Enum
from functools import lru_cache
from typing import Union

import numpy as np

from ..core.errors import (
    NON_IDENTIFICATION_TOL,
    InputValidationError,
    check_identified,
)
from .dgp import (
    HETEROGENEOUS,
    DESIGN_B_SLOPE,
    DgpConfig,
    EtaShape,
    FiniteDistribution,
    LatentSample,
    Variant,
    calibration_error,
    covariates,
    draw_score,
    score_mean,
    score_variance,
    structural_tau,
)

logger = logging.getLogger(__name__)

DEFAULT_MC_POINTS = 1_000_000
MIN_MC_POINTS = 100_000
THEORY_SEED = 314159
PROBABILITY_TOL = 1e-12

Source = Union[DgpConfig, FiniteDistribution]


class IntegrationMethod(str, Enum):
    MC_INTEGRATION = "mc_integration"
    ENUMERATION = "enumeration"


@dataclass(frozen=True)
class TheoryReport:
    v_star: float
    b_cal: float
    sharp_bound: float
    kappa: float
    tau_bar: float
    e_abs_z: float
    method: IntegrationMethod
    mc_points: int
    seed: int

    def to_dict(self) -> dict:
        data = asdict(self)
        data["method"] = self.method.value
        return data


@dataclass(frozen=True, eq=False)
class _ScoreLaw:
    """Monte Carlo draws from the unclipped score law of one design."""

    x: np.ndarray
    r: np.ndarray
    v: np.ndarray
    p: np.ndarray
    tau: np.ndarray

    @property
    def z(self) -> np.ndarray:
        return 2.0 * self.p - 1.0


@lru_cache(maxsize=4)
def _draw_law(cfg: DgpConfig, mc_points: int, seed: int) -> _ScoreLaw:
    rng = np.random.default_rng(seed)
    x = covariates(cfg, mc_points, rng)
    r = score_mean(cfg, x)
    v = score_variance(cfg, x, r)
    p = draw_score(cfg, r, v, rng)
    return _ScoreLaw(x=x, r=r, v=v, p=p, tau=structural_tau(cfg, x))


def _score_law(cfg: DgpConfig, mc_points: int, seed: int) -> _ScoreLaw:
    if mc_points < MIN_MC_POINTS:
        raise InputValidationError(
            f"MC integration needs at least {MIN_MC_POINTS} points, got {mc_points}"
        )
    # n and the calibration error do not enter the score law
    law_cfg = cfg.with_(n=1, eta_shape=EtaShape.NONE, delta=0.0)
    return _draw_law(law_cfg, int(mc_points), int(seed))


@dataclass(frozen=True)
class PopulationMoments:
    """Exact population moments of a finite-support distribution."""

    total_probability: float
    e_zr: float
    v_star: float
    e_abs_z: float
    e_z_sq: float
    tau: float
    identified: bool
    e_psi_sq: float
    e_psi_tilde_sq: float
    cov_gp_by_x: dict
    var_p_by_x: dict
    r_by_x: dict
    m_by_x: dict
    delta_marg: float
    c_term: float
    gateaux: dict

    def to_dict(self) -> dict:
        data = asdict(self)
        for key in ("cov_gp_by_x", "var_p_by_x", "r_by_x", "m_by_x"):
            data[key] = {",".join(f"{v:g}" for v in k): val for k, val in data[key].items()}
        data["gateaux"] = {
            f"{kind}/{direction}": val for (kind, direction), val in self.gateaux.items()
        }
        return data


def _by_group(dist: FiniteDistribution, per_atom: np.ndarray) -> dict:
    keys, group = dist.x_groups()
    group = group.reshape(-1)
    return {
        tuple(float(v) for v in keys[j]): float(per_atom[group == j][0])
        for j in range(keys.shape[0])
    }


def _cell_gap(prob: np.ndarray, g: np.ndarray, values: np.ndarray) -> float:
    p1 = float(np.sum(prob * g))
    p0 = float(np.sum(prob * (1.0 - g)))
    if p1 <= 0.0 or p0 <= 0.0:
        raise InputValidationError("marginal gap needs both G-cells to have positive mass")
    return float(np.sum(prob * g * values) / p1 - np.sum(prob * (1.0 - g) * values) / p0)


def enumeration_oracle(dist: FiniteDistribution) -> PopulationMoments:
    """Exact population moments by summation over the atoms.

    The directional derivatives in `gateaux` are closed forms along
    delta(X) = X_1 at the true nuisances, keyed by (score, nuisance).
    """
    total = float(np.sum(dist.prob))
    if abs(total - 1.0) > PROBABILITY_TOL:
        raise InputValidationError(
            f"atom probabilities sum to {total!r}, not 1 within {PROBABILITY_TOL:g}"
        )
    prob = dist.prob
    y = dist.y
    m = dist.conditional_mean(y)
    r = dist.conditional_mean(dist.p)
    z = 2.0 * dist.p - 1.0
    resid = y - m
    a = dist.p - r
    x1 = dist.x[:, 0]

    v_star = dist.expectation(a * a)
    e_zr = dist.expectation(z * resid)
    identified = v_star > NON_IDENTIFICATION_TOL
    tau = e_zr / (2.0 * v_star) if identified else float("nan")
    if not identified:
        logger.warning(f"enumerated distribution is not identified: V* = {v_star:.3e}")

    psi = z * resid - 2.0 * tau * a * a
    psi_tilde = 2.0 * a * (resid - tau * a)
    cov_gp = dist.conditional_mean((dist.g - r) * a)
    var_p = dist.conditional_mean(a * a)

    gateaux = {
        ("psi", "m"): -dist.expectation(z * x1),
        ("psi", "r"): 4.0 * tau * dist.expectation(a * x1),
        ("psi_tilde", "m"): -2.0 * dist.expectation(a * x1),
        ("psi_tilde", "r"): -2.0 * dist.expectation(x1 * (resid - tau * a))
        + 2.0 * tau * dist.expectation(a * x1),
    }

    return PopulationMoments(
        total_probability=total,
        e_zr=e_zr,
        v_star=v_star,
        e_abs_z=dist.expectation(np.abs(z)),
        e_z_sq=dist.expectation(z * z),
        tau=float(tau),
        identified=bool(identified),
        e_psi_sq=dist.expectation(psi * psi),
        e_psi_tilde_sq=dist.expectation(psi_tilde * psi_tilde),
        cov_gp_by_x=_by_group(dist, cov_gp),
        var_p_by_x=_by_group(dist, var_p),
        r_by_x=_by_group(dist, r),
        m_by_x=_by_group(dist, m),
        delta_marg=_cell_gap(prob, dist.g, y),
        c_term=_cell_gap(prob, dist.g, dist.mu),
        gateaux=gateaux,
    )


def true_vstar(
    source: Source, mc_points: int = DEFAULT_MC_POINTS, seed: int = THEORY_SEED
) -> float:
    """V* = E[Var(p | X)]; sigma_u^2 E[r(1 - r)] on the baseline design."""
    if isinstance(source, FiniteDistribution):
        return enumeration_oracle(source).v_star
    if source.sigma_u == 0.0:
        return 0.0
    return float(np.mean(_score_law(source, mc_points, seed).v))


def theoretical_bias(
    cfg: DgpConfig,
    mc_points: int = DEFAULT_MC_POINTS,
    seed: int = THEORY_SEED,
    clipped: bool = False,
) -> float:
    """Asymptotic oracle bias tau E[(2p - 1) eta(p)] / (2 V*).

    With `clipped=True`, eta is replaced by the calibration error the generator
    actually realizes, clip(p + eta, 0, 1) - p.
    """
    if cfg.eta_shape is EtaShape.NONE:
        raise InputValidationError("theoretical_bias needs an eta_shape other than 'none'")
    law = _score_law(cfg, mc_points, seed)
    v_star = float(np.mean(law.v))
    check_identified(v_star)
    eta = calibration_error(cfg.eta_shape, cfg.delta, law.p)
    if clipped:
        eta = np.clip(law.p + eta, 0.0, 1.0) - law.p
    return float(np.mean(law.tau * law.z * eta)) / (2.0 * v_star)


def sharp_bound(
    source: Source,
    delta: float,
    mc_points: int = DEFAULT_MC_POINTS,
    seed: int = THEORY_SEED,
) -> float:
    """|tau| delta E|2p - 1| / (2 V*), attained at eta = delta sgn(2p - 1)."""
    if not delta >= 0.0:
        raise InputValidationError(f"delta must be non-negative, got {delta}")
    if isinstance(source, FiniteDistribution):
        moments = enumeration_oracle(source)
        check_identified(moments.v_star)
        return abs(moments.tau) * delta * moments.e_abs_z / (2.0 * moments.v_star)
    law = _score_law(source, mc_points, seed)
    v_star = float(np.mean(law.v))
    check_identified(v_star)
    return abs(source.tau0) * delta * float(np.mean(np.abs(law.z))) / (2.0 * v_star)


def attenuation_kappa(
    source: Source, mc_points: int = DEFAULT_MC_POINTS, seed: int = THEORY_SEED
) -> float:
    """kappa = 2 E|p - 1/2|, the shrinkage factor of the hard-threshold gap."""
    if isinstance(source, FiniteDistribution):
        return 2.0 * source.expectation(np.abs(source.p - 0.5))
    if source.variant is not Variant.SYMMETRIC_THRESHOLD:
        raise InputValidationError("attenuation_kappa needs the symmetric_threshold variant")
    law = _score_law(source, mc_points, seed)
    return 2.0 * float(np.mean(np.abs(law.p - 0.5)))


def variance_weighted_tau(
    source: Source, mc_points: int = DEFAULT_MC_POINTS, seed: int = THEORY_SEED
) -> float:
    """tau-bar = E[tau(X) v(X)] / E[v(X)] with realized per-row variances."""
    if isinstance(source, FiniteDistribution):
        a = source.p - source.conditional_mean(source.p)
        var_p = source.conditional_mean(a * a)
        weight = source.expectation(var_p)
        check_identified(weight)
        return source.expectation(source.tau_of_x * var_p) / weight
    if source.variant not in HETEROGENEOUS:
        raise InputValidationError("variance_weighted_tau needs a heterogeneous variant")
    law = _score_law(source, mc_points, seed)
    if source.variant is Variant.HETERO_B:
        nominal = source.sigma_u**2 * np.exp(DESIGN_B_SLOPE * law.x[:, 0])
        share = float(np.mean(law.v < nominal))
        if share > 0.0:
            logger.warning(f"Design B variance cap binds on {share:.1%} of integration points")
    weight = float(np.mean(law.v))
    check_identified(weight)
    return float(np.mean(law.tau * law.v)) / weight


def marginal_gap(source: Union[LatentSample, FiniteDistribution]) -> tuple[float, float]:
    """(Delta_marg, C): raw group gap in Y and the compositional gap in mu(X).

    Needs the latent G, so it is defined on simulated data only.
    """
    if isinstance(source, FiniteDistribution):
        moments = enumeration_oracle(source)
        return moments.delta_marg, moments.c_term
    g = source.g
    if g.min() == g.max():
        raise InputValidationError("marginal gap needs both G = 0 and G = 1 rows")
    weights = np.full(source.n, 1.0 / source.n)
    return (
        _cell_gap(weights, g, source.observed.y),
        _cell_gap(weights, g, source.true_mu),
    )


def theory_report(
    source: Source,
    delta: float = 0.0,
    mc_points: int = DEFAULT_MC_POINTS,
    seed: int = THEORY_SEED,
) -> TheoryReport:
    """Every reference value for one design from a single set of draws.

    A `FiniteDistribution` is summed exactly instead; its `b_cal` is the gap
    between the oracle estimand and the variance-weighted tau.
    """
    if isinstance(source, FiniteDistribution):
        return _enumerated_report(source, delta)
    cfg = source
    law = _score_law(cfg, mc_points, seed)
    v_star = float(np.mean(law.v))
    identified = v_star > NON_IDENTIFICATION_TOL
    e_abs_z = float(np.mean(np.abs(law.z)))

    b_cal = 0.0
    if cfg.eta_shape is not EtaShape.NONE and identified:
        b_cal = theoretical_bias(cfg, mc_points, seed)
    bound = float("nan")
    if identified:
        bound = abs(cfg.tau0) * delta * e_abs_z / (2.0 * v_star)
    kappa = float("nan")
    if cfg.variant is Variant.SYMMETRIC_THRESHOLD:
        kappa = attenuation_kappa(cfg, mc_points, seed)
    tau_bar = cfg.tau0
    if cfg.variant in HETEROGENEOUS and identified:
        tau_bar = variance_weighted_tau(cfg, mc_points, seed)

    return TheoryReport(
        v_star=v_star,
        b_cal=b_cal,
        sharp_bound=bound,
        kappa=kappa,
        tau_bar=tau_bar,
        e_abs_z=e_abs_z,
        method=IntegrationMethod.MC_INTEGRATION,
        mc_points=int(mc_points),
        seed=int(seed),
    )


def _enumerated_report(dist: FiniteDistribution, delta: float) -> TheoryReport:
    if not delta >= 0.0:
        raise InputValidationError(f"delta must be non-negative, got {delta}")
    moments = enumeration_oracle(dist)
    bound = float("nan")
    b_cal = float("nan")
    tau_bar = float("nan")
    if moments.identified:
        bound = abs(moments.tau) * delta * moments.e_abs_z / (2.0 * moments.v_star)
        tau_bar = variance_weighted_tau(dist)
        b_cal = moments.tau - tau_bar
    return TheoryReport(
        v_star=moments.v_star,
        b_cal=float(b_cal),
        sharp_bound=float(bound),
        kappa=attenuation_kappa(dist),
        tau_bar=float(tau_bar),
        e_abs_z=moments.e_abs_z,
        method=IntegrationMethod.ENUMERATION,
        mc_points=0,
        seed=0,
    )
