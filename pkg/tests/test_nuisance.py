import numpy as np
import pytest

from src.core.errors import InputValidationError, NumericalError
from src.core.sample import NuisancePair, ObservedSample
from src.estimation.nuisance import (
    cross_fit,
    fit_nuisances,
    kfold_split,
    poly_features,
    ridge_fit,
)
from src.simulation.dgp import DgpConfig, generate


class TestPolyFeatures:
    def test_ordering_for_two_covariates(self):
        features = poly_features(np.array([2.0, 3.0]))
        assert features.tolist() == [2.0, 3.0, 4.0, 9.0, 6.0]

    def test_matrix_width(self):
        x = np.arange(12, dtype=float).reshape(4, 3)
        assert poly_features(x).shape == (4, 3 + 3 + 3)

    def test_single_covariate(self):
        assert poly_features(np.array([[2.0], [-1.0]])).tolist() == [[2.0, 4.0], [-1.0, 1.0]]

    def test_unsupported_degree(self):
        with pytest.raises(InputValidationError):
            poly_features(np.zeros(3), degree=3)


class TestRidge:
    def test_unpenalized_fit_recovers_linear_model(self, rng):
        x = rng.normal(size=(200, 2))
        y = 1.5 + 2.0 * x[:, 0] - 0.5 * x[:, 1]
        model = ridge_fit(x, y, lam=0.0)
        intercept, coef = model.raw_coefficients()
        assert intercept == pytest.approx(1.5, abs=1e-9)
        assert coef == pytest.approx([2.0, -0.5], abs=1e-9)
        assert model.predict(x) == pytest.approx(y, abs=1e-9)

    def test_penalty_shrinks_slopes(self, rng):
        x = rng.normal(size=(100, 1))
        y = 3.0 * x[:, 0] + rng.normal(size=100)
        loose = ridge_fit(x, y, lam=0.0).raw_coefficients()[1][0]
        tight = ridge_fit(x, y, lam=1000.0).raw_coefficients()[1][0]
        assert abs(tight) < abs(loose)

    def test_singular_system_at_zero_penalty(self):
        x = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
        with pytest.raises(NumericalError):
            ridge_fit(x, np.array([1.0, 2.0, 3.0]), lam=0.0)

    def test_collinear_system_solves_with_penalty(self):
        x = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
        model = ridge_fit(x, np.array([1.0, 2.0, 3.0]), lam=1.0)
        assert np.all(np.isfinite(model.weights))

    def test_constant_column_stays_finite(self):
        x = np.column_stack([np.ones(5), np.arange(5.0)])
        model = ridge_fit(x, np.arange(5.0), lam=0.1)
        assert np.all(np.isfinite(model.predict(x)))

    def test_negative_penalty(self):
        with pytest.raises(InputValidationError):
            ridge_fit(np.zeros((3, 1)), np.zeros(3), lam=-1.0)

    def test_fit_nuisances_needs_enough_rows(self):
        sample = ObservedSample(y=np.zeros(5), x=np.zeros((5, 3)), p=np.full(5, 0.5))
        with pytest.raises(InputValidationError):
            fit_nuisances(sample)

    def test_fit_nuisances_on_quadratic_truth(self, rng):
        x = rng.normal(size=(400, 2))
        p = np.clip(0.5 + 0.1 * x[:, 0] ** 2 - 0.1, 0.0, 1.0)
        y = 1.0 + x[:, 0] * x[:, 1]
        nuis = fit_nuisances(ObservedSample(y=y, x=x, p=p), lam=1e-8)
        assert nuis.m_values(x) == pytest.approx(y, abs=1e-5)


class TestFolds:
    def test_fold_sizes_balanced(self):
        folds = kfold_split(103, 5, seed=1)
        sizes = folds.sizes()
        assert sizes.sum() == 103
        assert sizes.max() - sizes.min() <= 1

    def test_deterministic(self):
        a = kfold_split(50, 5, seed=9).fold_of
        b = kfold_split(50, 5, seed=9).fold_of
        c = kfold_split(50, 5, seed=10).fold_of
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_train_and_test_partition(self):
        folds = kfold_split(20, 4, seed=0)
        for k in range(4):
            train, test = folds.train_rows(k), folds.test_rows(k)
            assert np.intersect1d(train, test).size == 0
            assert train.size + test.size == 20

    @pytest.mark.parametrize("k", [1, 30])
    def test_invalid_fold_count(self, k):
        with pytest.raises(InputValidationError):
            kfold_split(20, k, seed=0)


def _training_mean_fitter(sample: ObservedSample, lam: float) -> NuisancePair:
    m_mean, r_mean = float(np.mean(sample.y)), float(np.mean(sample.p))
    return NuisancePair(
        m=lambda x: np.full(np.atleast_2d(x).shape[0], m_mean),
        r=lambda x: np.full(np.atleast_2d(x).shape[0], r_mean),
    )


class TestCrossFit:
    def test_predictions_come_from_other_folds(self, rng):
        n = 40
        sample = ObservedSample(
            y=rng.normal(size=n), x=rng.normal(size=(n, 1)), p=rng.uniform(size=n)
        )
        folds = kfold_split(n, 4, seed=3)
        m_hat, r_hat = cross_fit(sample, folds, lam=1.0, fitter=_training_mean_fitter)
        for k in range(4):
            test, train = folds.test_rows(k), folds.train_rows(k)
            assert m_hat[test] == pytest.approx(np.mean(sample.y[train]))
            assert r_hat[test] == pytest.approx(np.mean(sample.p[train]))

    def test_parallel_matches_serial(self, rng):
        n = 300
        sample = ObservedSample(
            y=rng.normal(size=n), x=rng.normal(size=(n, 3)), p=rng.uniform(size=n)
        )
        folds = kfold_split(n, 5, seed=11)
        serial = cross_fit(sample, folds, lam=1.0)
        parallel = cross_fit(sample, folds, lam=1.0, n_jobs=3)
        np.testing.assert_array_equal(serial[0], parallel[0])
        np.testing.assert_array_equal(serial[1], parallel[1])


class TestOnBaselineDesign:
    def test_score_mean_fit_is_accurate(self):
        latent = generate(DgpConfig(n=5000, tau0=1.0, sigma_u=0.30), np.random.default_rng(77))
        nuis = fit_nuisances(latent.observed)
        r_hat = nuis.r_values(latent.observed.x)
        assert np.mean((r_hat - latent.true_r) ** 2) < 5e-3
