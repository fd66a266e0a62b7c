"""Linear and logistic fitting kernels and the conditional-variance helper."""

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from regcal import (
    InsufficientRowsError,
    NoVariationInResponseError,
    RankDeficientDesignError,
    SeparationError,
    conditional_variance,
    fit_logistic,
    fit_ols,
)


def _design(rng, n, k):
    x = rng.standard_normal((n, k - 1))
    return np.column_stack([np.ones(n), x])


class TestFitOls:
    def test_exact_recovery_without_noise(self):
        rng = np.random.default_rng(0)
        X = _design(rng, 50, 3)
        y = 2.0 + 3.0 * X[:, 1] - 1.5 * X[:, 2]
        fr = fit_ols(X, y)
        assert np.allclose(fr.coefficients, [2.0, 3.0, -1.5], atol=1e-10)
        assert fr.residual_variance < 1e-20
        assert fr.converged
        assert fr.n_used == 50
        assert fr.family is None

    def test_covariance_matches_normal_equations(self):
        rng = np.random.default_rng(1)
        X = _design(rng, 200, 3)
        y = 1.0 + 0.5 * X[:, 1] + rng.standard_normal(200)
        fr = fit_ols(X, y)
        resid = y - X @ fr.coefficients
        sigma2 = resid @ resid / (200 - 3)
        cov = sigma2 * np.linalg.inv(X.T @ X)
        assert np.allclose(fr.coef_covariance, cov, rtol=1e-8)
        assert np.isclose(fr.residual_variance, sigma2, rtol=1e-10)

    def test_multi_response_matches_column_by_column(self):
        rng = np.random.default_rng(2)
        X = _design(rng, 120, 4)
        Y = rng.standard_normal((120, 3))
        joint = fit_ols(X, Y)
        assert joint.coefficients.shape == (4, 3)
        for j in range(3):
            single = fit_ols(X, Y[:, j])
            assert np.array_equal(joint.coefficients[:, j], single.coefficients), j
            assert joint.residual_variance[j, j] == single.residual_variance, j
            block = joint.coef_covariance[4 * j : 4 * (j + 1), 4 * j : 4 * (j + 1)]
            assert np.array_equal(block, single.coef_covariance), j

    def test_multi_response_covariance_shape(self):
        rng = np.random.default_rng(3)
        X = _design(rng, 80, 3)
        Y = rng.standard_normal((80, 2))
        fr = fit_ols(X, Y)
        assert np.asarray(fr.residual_variance).shape == (2, 2)
        assert fr.coef_covariance.shape == (6, 6)

    def test_column_permutation_leaves_fit_unchanged(self):
        rng = np.random.default_rng(4)
        X = _design(rng, 150, 4)
        y = X @ np.array([1.0, -2.0, 0.5, 3.0]) + rng.standard_normal(150)
        perm = [0, 3, 1, 2]
        fr = fit_ols(X, y)
        fr_perm = fit_ols(X[:, perm], y)
        assert np.allclose(fr_perm.coefficients, fr.coefficients[perm], atol=1e-10)

    def test_widely_scaled_columns_still_accurate(self):
        rng = np.random.default_rng(5)
        X = _design(rng, 300, 3)
        X[:, 1] *= 1e6
        X[:, 2] *= 1e-6
        beta = np.array([1.0, 2e-6, 3e6])
        y = X @ beta
        fr = fit_ols(X, y)
        assert np.allclose(fr.coefficients, beta, rtol=1e-8)

    def test_duplicate_column_rejected(self):
        rng = np.random.default_rng(6)
        X = _design(rng, 40, 2)
        X = np.column_stack([X, X[:, 1]])
        with pytest.raises(RankDeficientDesignError):
            fit_ols(X, np.arange(40.0))

    def test_too_few_rows_rejected(self):
        X = np.ones((3, 3))
        X[:, 1] = [1.0, 2.0, 3.0]
        X[:, 2] = [2.0, 1.0, 4.0]
        with pytest.raises(InsufficientRowsError):
            fit_ols(X, np.zeros(3))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000), n=st.integers(20, 200))
    def test_residuals_orthogonal_to_design(self, seed, n):
        rng = np.random.default_rng(seed)
        X = _design(rng, n, 3)
        y = rng.standard_normal(n) * 3.0 + X[:, 1]
        fr = fit_ols(X, y)
        resid = y - X @ fr.coefficients
        assert np.abs(X.T @ resid).max() < 1e-8 * n


class TestFitLogistic:
    def test_balanced_intercept_only(self):
        X = np.ones((10, 1))
        y = np.array([0.0, 1.0] * 5)
        fr = fit_logistic(X, y)
        assert fr.converged
        assert fr.iterations == 0
        assert np.allclose(fr.coefficients, [0.0])
        # the family tag is attached by the study-level wrappers
        assert fr.family is None

    def test_two_by_two_log_odds_ratio(self):
        # exposure doubles the odds from 1:1 to 3:1
        z = np.repeat([0.0, 1.0], 40)
        y = np.concatenate([np.tile([0.0, 1.0], 20), np.repeat([0.0, 1.0], [10, 30])])
        fr = fit_logistic(np.column_stack([np.ones(80), z]), y)
        assert np.isclose(fr.coefficients[1], np.log(3.0), atol=1e-9)

    def test_score_vanishes_at_solution(self):
        rng = np.random.default_rng(7)
        X = _design(rng, 500, 3)
        eta = -0.3 + 0.8 * X[:, 1] - 0.5 * X[:, 2]
        y = (rng.random(500) < 1.0 / (1.0 + np.exp(-eta))).astype(float)
        fr = fit_logistic(X, y)
        p = 1.0 / (1.0 + np.exp(-(X @ fr.coefficients)))
        assert np.abs(X.T @ (y - p)).max() < 1e-6

    def test_covariance_matches_finite_difference_information(self):
        rng = np.random.default_rng(8)
        X = _design(rng, 400, 3)
        eta = 0.2 + 0.6 * X[:, 1] + 0.3 * X[:, 2]
        y = (rng.random(400) < 1.0 / (1.0 + np.exp(-eta))).astype(float)
        fr = fit_logistic(X, y)

        def score(beta):
            p = 1.0 / (1.0 + np.exp(-(X @ beta)))
            return X.T @ (y - p)

        h = 1e-5
        k = X.shape[1]
        info = np.empty((k, k))
        for j in range(k):
            step = np.zeros(k)
            step[j] = h
            info[:, j] = -(score(fr.coefficients + step) - score(fr.coefficients - step)) / (2 * h)
        cov_fd = np.linalg.inv(0.5 * (info + info.T))
        rel = np.abs(fr.coef_covariance - cov_fd) / np.abs(cov_fd)
        assert rel.max() < 1e-4

    def test_separated_continuous_predictor_raises(self):
        rng = np.random.default_rng(9)
        z = rng.standard_normal(200)
        y = (z > 0).astype(float)
        with pytest.raises(SeparationError):
            fit_logistic(np.column_stack([np.ones(200), z]), y)

    def test_separated_binary_predictor_converges_by_vanishing_score(self):
        # a saturated 0/1 predictor drives the score to zero at finite,
        # if extreme, coefficients; that is convergence, not divergence
        z = np.repeat([0.0, 1.0], 20)
        fr = fit_logistic(np.column_stack([np.ones(40), z]), z.copy())
        assert fr.converged
        assert np.abs(fr.coefficients).max() > 20.0

    def test_constant_response_rejected(self):
        X = np.column_stack([np.ones(30), np.arange(30.0)])
        with pytest.raises(NoVariationInResponseError):
            fit_logistic(X, np.ones(30))

    def test_non_binary_response_rejected(self):
        X = np.column_stack([np.ones(30), np.arange(30.0)])
        y = np.linspace(0.0, 1.0, 30)
        with pytest.raises(ValueError):
            fit_logistic(X, y)

    def test_too_few_rows_rejected(self):
        X = np.column_stack([np.ones(2), [0.0, 1.0]])
        with pytest.raises(InsufficientRowsError):
            fit_logistic(X, np.array([0.0, 1.0]))


class TestConditionalVariance:
    def test_exactly_linear_target_has_zero_residual_variance(self):
        rng = np.random.default_rng(10)
        w = rng.standard_normal((100, 2))
        target = 0.3 + w @ np.array([1.0, -2.0])
        out = conditional_variance(target[:, None], w)
        assert out.shape == (1, 1)
        assert abs(out[0, 0]) < 1e-20

    def test_matches_known_residual_law(self):
        # target = w + noise with unit noise variance
        rng = np.random.default_rng(11)
        w = rng.standard_normal((200_000, 1))
        target = 2.0 * w[:, 0] + rng.standard_normal(200_000)
        out = conditional_variance(target[:, None], w)
        assert abs(out[0, 0] - 1.0) < 0.02

    def test_multivariate_output_is_symmetric(self):
        rng = np.random.default_rng(12)
        w = rng.standard_normal((500, 1))
        t = np.column_stack(
            [w[:, 0] + rng.standard_normal(500), rng.standard_normal(500)]
        )
        out = conditional_variance(t, w)
        assert out.shape == (2, 2)
        assert np.allclose(out, out.T)

    def test_too_few_rows_rejected(self):
        with pytest.raises(InsufficientRowsError):
            conditional_variance(np.zeros((2, 1)), np.zeros((2, 1)))
