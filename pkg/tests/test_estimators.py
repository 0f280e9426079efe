import numpy as np
import pytest

from src.core.errors import InputValidationError, NonIdentificationError
from src.core.sample import NuisancePair, ObservedSample
from src.estimation.estimators import (
    Direction,
    Method,
    ScoreKind,
    TauEstimate,
    gateaux_derivative,
    hard_threshold_gap,
    oracle_tau,
    orthogonal_tau,
    orthogonal_tau_from_nuisances,
    plugin_tau,
    score_values,
    sensitivity_band,
    wald_interval,
)
from src.simulation.dgp import DgpConfig, generate, true_nuisances


def _first_covariate(x):
    return np.atleast_2d(x)[:, 0]


class TestOracleOnCanonicalDistribution:
    def test_recovers_tau_exactly(self, canonical, canonical_sample):
        est = oracle_tau(canonical_sample, canonical.true_nuisances())
        assert est.tau_hat == pytest.approx(2.0, abs=1e-10)
        assert est.v_star_hat == pytest.approx(0.01, abs=1e-12)
        assert est.mean_abs_z == pytest.approx(0.4, abs=1e-12)
        assert est.method is Method.ORACLE

    def test_orthogonal_at_true_nuisances(self, canonical, canonical_sample):
        est = orthogonal_tau_from_nuisances(canonical_sample, canonical.true_nuisances())
        assert est.tau_hat == pytest.approx(2.0, abs=1e-10)

    def test_scores_have_mean_zero_at_truth(self, canonical, canonical_sample):
        nuis = canonical.true_nuisances()
        for kind in ScoreKind:
            values = score_values(canonical_sample, nuis, 2.0, kind)
            assert np.mean(values) == pytest.approx(0.0, abs=1e-12)


class TestGateauxDerivatives:
    @pytest.mark.parametrize(
        "kind, direction, expected",
        [
            (ScoreKind.PSI, Direction.M, -0.2),
            (ScoreKind.PSI, Direction.R, 0.0),
            (ScoreKind.PSI_TILDE, Direction.M, 0.0),
            (ScoreKind.PSI_TILDE, Direction.R, 0.0),
        ],
    )
    def test_directional_derivatives(self, canonical, kind, direction, expected):
        value = gateaux_derivative(
            kind,
            direction,
            _first_covariate,
            h=1e-3,
            reference=canonical.observed(),
            nuis=canonical.true_nuisances(),
            tau=2.0,
            weights=canonical.prob,
        )
        assert value == pytest.approx(expected, abs=1e-6)

    @pytest.mark.parametrize("h", [0.0, 0.5])
    def test_step_bounds(self, canonical, h):
        with pytest.raises(InputValidationError):
            gateaux_derivative(
                ScoreKind.PSI,
                Direction.M,
                _first_covariate,
                h=h,
                reference=canonical.observed(),
                nuis=canonical.true_nuisances(),
                tau=2.0,
            )


class TestNonIdentification:
    def test_constant_score(self):
        n = 50
        sample = ObservedSample(
            y=np.arange(n, dtype=float), x=np.zeros((n, 1)), p=np.full(n, 0.4)
        )
        nuis = NuisancePair(m=lambda x: np.zeros(len(x)), r=lambda x: np.full(len(x), 0.4))
        with pytest.raises(NonIdentificationError):
            oracle_tau(sample, nuis)
        with pytest.raises(NonIdentificationError):
            orthogonal_tau_from_nuisances(sample, nuis)

    def test_score_is_function_of_covariates(self, rng):
        x = rng.normal(size=(200, 1))
        p = 1.0 / (1.0 + np.exp(-x[:, 0]))
        sample = ObservedSample(y=rng.normal(size=200), x=x, p=p)
        nuis = NuisancePair(
            m=lambda x: np.zeros(len(x)), r=lambda x: 1.0 / (1.0 + np.exp(-x[:, 0]))
        )
        with pytest.raises(NonIdentificationError):
            oracle_tau(sample, nuis)


class TestHardThreshold:
    def test_gap_and_tie_handling(self):
        sample = ObservedSample(
            y=[3.0, 5.0, 1.0, 0.0, 2.0],
            x=np.zeros(5),
            p=[0.9, 0.6, 0.5, 0.2, 0.1],
        )
        nuis = NuisancePair(m=lambda x: np.zeros(len(x)), r=lambda x: np.full(len(x), 0.5))
        est = hard_threshold_gap(sample, nuis)
        assert est.tau_hat == pytest.approx(4.0 - 1.0)
        assert est.method is Method.HARD_THRESHOLD

    def test_empty_upper_cell(self):
        sample = ObservedSample(y=[1.0, 2.0], x=[0.0, 0.0], p=[0.5, 0.2])
        nuis = NuisancePair(m=lambda x: np.zeros(len(x)), r=lambda x: np.full(len(x), 0.3))
        with pytest.raises(InputValidationError, match="p > 1/2"):
            hard_threshold_gap(sample, nuis)


class TestInterval:
    def test_wald_interval(self):
        low, high = wald_interval(1.0, 2.0, 100, 0.05)
        assert high - 1.0 == pytest.approx(1.959964 * 0.2, rel=1e-6)
        assert 1.0 - low == pytest.approx(high - 1.0)

    def test_bad_alpha(self):
        with pytest.raises(InputValidationError):
            wald_interval(0.0, 1.0, 10, 1.5)

    def test_estimate_helpers(self):
        est = TauEstimate(
            tau_hat=1.0,
            se=2.0,
            ci_low=0.5,
            ci_high=1.5,
            v_star_hat=0.02,
            n=400,
            method=Method.PLUGIN,
        )
        assert est.std_error == pytest.approx(0.1)
        assert est.covers(1.2)
        assert not est.covers(1.6)
        assert est.to_dict()["method"] == "plugin"

    def test_sensitivity_band(self):
        est = TauEstimate(
            tau_hat=-1.0,
            se=1.0,
            ci_low=-2.0,
            ci_high=0.0,
            v_star_hat=0.02,
            n=100,
            method=Method.ORTHOGONAL,
            mean_abs_z=0.35,
        )
        band = sensitivity_band(est, delta=0.05)
        assert band.half_width == pytest.approx(1.0 * 0.05 * 0.35 / 0.04)
        assert band.low == pytest.approx(-1.0 - band.half_width)
        assert sensitivity_band(est, 0.0).half_width == 0.0

    def test_sensitivity_band_uses_sample_mean_abs_z(self, canonical, canonical_sample):
        est = oracle_tau(canonical_sample, canonical.true_nuisances())
        band = sensitivity_band(est, 0.1)
        assert band.half_width == pytest.approx(2.0 * 0.1 * 0.4 / 0.02, rel=1e-9)

    def test_sensitivity_band_needs_mean_abs_z(self):
        est = TauEstimate(
            tau_hat=1.0,
            se=1.0,
            ci_low=0.0,
            ci_high=2.0,
            v_star_hat=0.02,
            n=100,
            method=Method.ORTHOGONAL,
        )
        with pytest.raises(InputValidationError, match="mean"):
            sensitivity_band(est, 0.05)


class TestOnSimulatedData:
    @pytest.fixture
    def latent(self, baseline_cfg):
        return generate(baseline_cfg, np.random.default_rng(2024))

    def test_oracle_close_to_truth(self, latent, baseline_cfg):
        est = oracle_tau(latent.observed, true_nuisances(baseline_cfg))
        assert abs(est.tau_hat - 1.0) < 5.0 * est.std_error
        assert est.ci_low < est.tau_hat < est.ci_high

    def test_orthogonal_close_to_truth(self, latent):
        est = orthogonal_tau(latent.observed, k=5, lam=1.0, seed=3)
        assert est.method is Method.ORTHOGONAL
        assert abs(est.tau_hat - 1.0) < 5.0 * est.std_error

    def test_orthogonal_is_deterministic_across_workers(self, latent):
        a = orthogonal_tau(latent.observed, k=5, seed=8)
        b = orthogonal_tau(latent.observed, k=5, seed=8, n_jobs=2)
        assert a.tau_hat == b.tau_hat
        assert a.se == b.se

    def test_plugin_runs_with_custom_fitter(self, latent, baseline_cfg):
        est = plugin_tau(latent.observed, fitter=lambda sample, lam: true_nuisances(baseline_cfg))
        oracle = oracle_tau(latent.observed, true_nuisances(baseline_cfg))
        assert est.tau_hat == pytest.approx(oracle.tau_hat)
        assert est.method is Method.PLUGIN


@pytest.mark.slow
class TestOracleOrthogonalAgreement:
    SIZES = (500, 5000, 50000)

    def _mean_gap(self, n):
        gaps = []
        for seed in range(5):
            cfg = DgpConfig(n=n, tau0=1.0, sigma_u=0.30)
            latent = generate(cfg, np.random.default_rng(1000 + seed))
            oracle = oracle_tau(latent.observed, true_nuisances(cfg))
            ortho = orthogonal_tau(latent.observed, k=5, lam=1.0, seed=seed)
            gaps.append(abs(ortho.tau_hat - oracle.tau_hat))
        return float(np.mean(gaps))

    def test_gap_shrinks_at_root_n_rate(self):
        gaps = [self._mean_gap(n) for n in self.SIZES]
        scaled = [gap * np.sqrt(n) for gap, n in zip(gaps, self.SIZES)]
        assert gaps[0] > gaps[1] > gaps[2]
        assert max(scaled) < 15.0
        assert max(scaled) / min(scaled) < 5.0
