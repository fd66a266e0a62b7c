"""Closed-form bias formulas, win conditions, bounds, and the transform oracle."""

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
import hypothesis.strategies as st

from regcal import (
    DegenerateTransformError,
    NonFiniteValueError,
    ScalarSetting,
    SingularInputError,
    bias_curve,
    bias_curve_csv,
    check_conditions,
    gamma1_closed_form,
    naive_relative_bias,
    optimal_transform,
    optimality_oracle,
    rc_bias_bound_region,
    rc_plim_factor,
    rc_relative_bias,
    transform_objective,
)

SETTINGS = st.builds(
    ScalarSetting,
    c1=st.floats(-2.0, 2.0),
    sigma2=st.floats(0.05, 5.0),
    sigma_m2=st.floats(0.05, 5.0),
    sigma_v2=st.floats(0.05, 5.0),
)

# the plim factor inverts the calibration slope, so keep c1 away from zero
SETTINGS_NONZERO_C1 = st.builds(
    ScalarSetting,
    c1=st.floats(-2.0, 2.0).filter(lambda v: abs(v) > 1e-3),
    sigma2=st.floats(0.05, 5.0),
    sigma_m2=st.floats(0.05, 5.0),
    sigma_v2=st.floats(0.05, 5.0),
)


def _random_pd(rng, p, jitter=0.1):
    a = rng.standard_normal((p, p))
    return a @ a.T + jitter * np.eye(p)


class TestScalarSetting:
    def test_fields(self):
        s = ScalarSetting(1.0, 1.44, 1.0, 1.2)
        assert (s.c1, s.sigma2, s.sigma_m2, s.sigma_v2) == (1.0, 1.44, 1.0, 1.2)

    def test_nonpositive_variance_rejected(self):
        with pytest.raises(ValueError):
            ScalarSetting(1.0, 0.0, 1.0, 1.2)
        with pytest.raises(ValueError):
            ScalarSetting(1.0, 1.0, -1.0, 1.2)

    def test_non_finite_rejected(self):
        with pytest.raises(NonFiniteValueError):
            ScalarSetting(np.nan, 1.0, 1.0, 1.0)

    def test_bool_rejected(self):
        with pytest.raises(TypeError):
            ScalarSetting(True, 1.0, 1.0, 1.0)


class TestGamma1ClosedForm:
    def test_scalar_reference_value(self):
        got = gamma1_closed_form(1.0, 1.44, 1.0)
        assert got.shape == (1, 1)
        assert abs(got[0, 0] - 1.0 / 2.44) < 1e-14

    def test_scalar_binary_noise_value(self):
        got = gamma1_closed_form(1.0, 0.36, 1.0)
        assert abs(got[0, 0] - 1.0 / 1.36) < 1e-14

    def test_identity_inputs(self):
        got = gamma1_closed_form(np.eye(2), np.eye(2), np.eye(2))
        assert np.allclose(got, 0.5 * np.eye(2), atol=1e-14)

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(21)
        for _ in range(20):
            p = int(rng.integers(1, 4))
            C1 = rng.standard_normal((p, p)) + 1.5 * np.eye(p)
            Sigma = _random_pd(rng, p)
            Sigma_x = _random_pd(rng, p)
            got = gamma1_closed_form(C1, Sigma, Sigma_x)
            inner = C1 @ np.linalg.inv(Sigma) @ C1.T + np.linalg.inv(Sigma_x)
            want = np.linalg.inv(Sigma) @ C1.T @ np.linalg.inv(inner)
            assert np.allclose(got, want, atol=1e-10)

    def test_singular_c1_rejected(self):
        with pytest.raises(SingularInputError):
            gamma1_closed_form(
                np.array([[1.0, 2.0], [2.0, 4.0]]), np.eye(2), np.eye(2)
            )

    def test_non_pd_sigma_rejected(self):
        with pytest.raises(SingularInputError):
            gamma1_closed_form(np.eye(2), np.array([[1.0, 2.0], [2.0, 1.0]]), np.eye(2))


class TestRcPlimFactor:
    def test_identity_when_laws_match_scalar(self):
        got = rc_plim_factor(1.0, 1.44, 1.0, 1.0)
        assert abs(got[0, 0] - 1.0) < 1e-12

    def test_identity_when_laws_match_matrix(self):
        rng = np.random.default_rng(22)
        for _ in range(50):
            p = int(rng.integers(1, 4))
            C1 = rng.standard_normal((p, p)) + 1.5 * np.eye(p)
            Sigma = _random_pd(rng, p)
            Sigma_m = _random_pd(rng, p)
            got = rc_plim_factor(C1, Sigma, Sigma_m, Sigma_m)
            assert np.abs(got - np.eye(p)).max() < 1e-10

    def test_scalar_reference_values(self):
        assert abs(rc_plim_factor(1.0, 1.44, 1.0, 1.2)[0, 0] - 55.0 / 61.0) < 1e-12
        assert abs(rc_plim_factor(1.0, 1.44, 1.0, 1.5)[0, 0] - 49.0 / 61.0) < 1e-12

    @settings(max_examples=200, deadline=None)
    @given(s=SETTINGS_NONZERO_C1)
    def test_scalar_factor_consistent_with_relative_bias(self, s):
        factor = rc_plim_factor(s.c1, s.sigma2, s.sigma_m2, s.sigma_v2)[0, 0]
        assert abs(factor - (1.0 + rc_relative_bias(s))) < 1e-10 * max(1.0, abs(factor))


class TestNaiveRelativeBias:
    def test_vanishes_at_special_point(self):
        assert naive_relative_bias(ScalarSetting(0.5, 0.25, 1.0, 0.7)) == 0.0

    def test_reference_values(self):
        assert abs(naive_relative_bias(ScalarSetting(1.0, 0.4, 1.0, 1.0)) + 2.0 / 7.0) < 1e-14
        assert (
            abs(naive_relative_bias(ScalarSetting(1.0, 1.44, 1.0, 1.0)) + 36.0 / 61.0)
            < 1e-14
        )

    @settings(max_examples=100, deadline=None)
    @given(s=SETTINGS, other_v2=st.floats(0.05, 5.0))
    def test_constant_in_validation_variance(self, s, other_v2):
        moved = ScalarSetting(s.c1, s.sigma2, s.sigma_m2, other_v2)
        assert naive_relative_bias(s) == naive_relative_bias(moved)


class TestRcRelativeBias:
    def test_vanishes_under_transportability(self):
        assert rc_relative_bias(ScalarSetting(1.0, 0.4, 1.0, 1.0)) == 0.0

    def test_reference_values(self):
        assert abs(rc_relative_bias(ScalarSetting(1.0, 0.4, 1.0, 1.2)) + 1.0 / 21.0) < 1e-14
        assert (
            abs(rc_relative_bias(ScalarSetting(1.0, 1.44, 1.0, 1.2)) + 6.0 / 61.0) < 1e-14
        )

    @settings(max_examples=100, deadline=None)
    @given(
        c1=st.floats(-2.0, 2.0),
        sigma2=st.floats(0.05, 5.0),
        sigma_m2=st.floats(0.05, 5.0),
        lo=st.floats(0.05, 5.0),
        hi=st.floats(0.05, 5.0),
    )
    def test_strictly_decreasing_in_validation_variance(self, c1, sigma2, sigma_m2, lo, hi):
        assume(abs(lo - hi) > 1e-6)
        a, b = sorted((lo, hi))
        bias_a = rc_relative_bias(ScalarSetting(c1, sigma2, sigma_m2, a))
        bias_b = rc_relative_bias(ScalarSetting(c1, sigma2, sigma_m2, b))
        assert bias_a > bias_b

    def test_sign_straddles_the_transportable_point(self):
        below = rc_relative_bias(ScalarSetting(1.0, 0.4, 1.0, 0.8))
        above = rc_relative_bias(ScalarSetting(1.0, 0.4, 1.0, 1.3))
        assert below > 0.0 > above


def _in_large_variance_gap(s):
    """Naive-win region missed by the six tabulated conditions.

    For 0 < c1 < 1 with c1 - c1^2 < sigma2/sigma_m2, the naive estimator
    also wins whenever sigma_v2 > sigma2/(c1 - c1^2); the tabulated rows
    only describe the small-sigma_v2 window.
    """
    spread = s.c1 - s.c1 * s.c1
    if spread <= 0.0:
        return False
    if spread >= s.sigma2 / s.sigma_m2:
        return False
    return s.sigma_v2 > s.sigma2 / spread


class TestCheckConditions:
    def test_equality_row_fires(self):
        report = check_conditions(ScalarSetting(0.5, 0.25, 1.0, 0.8))
        assert 1 in report.conditions_met
        assert report.naive_wins
        assert report.boundary

    def test_small_validation_variance_row_fires(self):
        report = check_conditions(ScalarSetting(1.0, 0.4, 1.0, 0.3))
        assert 3 in report.conditions_met
        assert report.naive_wins
        assert abs(report.rc_bias) > abs(report.naive_bias)

    def test_rc_wins_when_no_condition_holds(self):
        report = check_conditions(ScalarSetting(1.0, 0.4, 1.0, 1.2))
        assert report.conditions_met == frozenset()
        assert not report.naive_wins
        assert abs(report.rc_bias) < abs(report.naive_bias)

    def test_bias_fields_match_formulas(self):
        s = ScalarSetting(0.8, 0.9, 1.1, 2.3)
        report = check_conditions(s)
        assert report.naive_bias == naive_relative_bias(s)
        assert report.rc_bias == rc_relative_bias(s)

    def test_conditions_met_implies_naive_wins(self):
        rng = np.random.default_rng(23)
        for _ in range(400):
            s = ScalarSetting(
                rng.uniform(-2.0, 2.0),
                rng.uniform(0.05, 5.0),
                rng.uniform(0.05, 5.0),
                rng.uniform(0.05, 5.0),
            )
            report = check_conditions(s)
            if report.conditions_met and not report.boundary:
                assert report.naive_wins, s

    def test_large_variance_gap_is_flagged_in_notes(self):
        # naive wins here, but none of the six tabulated conditions hold
        report = check_conditions(ScalarSetting(0.1, 0.4, 1.0, 10.0))
        assert report.naive_wins
        assert report.conditions_met == frozenset()
        assert any("outside the six" in note for note in report.notes)

    def test_near_zero_slope_notes(self):
        report = check_conditions(ScalarSetting(0.0, 0.4, 1.0, 1.2))
        assert any("c1" in note for note in report.notes)

    @settings(max_examples=300, deadline=None)
    @given(s=SETTINGS)
    def test_conditions_plus_gap_region_characterize_naive_wins(self, s):
        report = check_conditions(s)
        assume(not report.boundary)
        predicted = bool(report.conditions_met) or _in_large_variance_gap(s)
        assert predicted == report.naive_wins, (s, report)


class TestBiasBoundRegion:
    def test_zero_bound_is_the_transportable_point(self):
        region = rc_bias_bound_region(1.0, 0.4, 1.0, 0.0)
        assert region.lower == region.upper == 1.0
        assert region.contains(1.0)
        assert not region.contains(1.0001)

    def test_reference_endpoints(self):
        region = rc_bias_bound_region(1.0, 0.4, 1.0, 0.05)
        assert abs(region.lower - 0.4 / 0.47) < 1e-12
        assert abs(region.upper - 0.4 / 0.33) < 1e-12
        assert abs(region.gate - 2.0 / 7.0) < 1e-12

    def test_endpoints_attain_the_bound(self):
        region = rc_bias_bound_region(1.0, 0.4, 1.0, 0.05)
        at_lower = rc_relative_bias(ScalarSetting(1.0, 0.4, 1.0, region.lower))
        at_upper = rc_relative_bias(ScalarSetting(1.0, 0.4, 1.0, region.upper))
        assert abs(at_lower - 0.05) < 1e-10
        assert abs(at_upper + 0.05) < 1e-10

    def test_bound_at_or_above_gate_is_unbounded_above(self):
        region = rc_bias_bound_region(1.0, 0.4, 1.0, 0.5)
        assert region.upper == math.inf
        assert region.contains(1e9)

    @settings(max_examples=150, deadline=None)
    @given(
        c1=st.floats(-2.0, 2.0).filter(lambda v: abs(v) > 1e-3),
        sigma2=st.floats(0.05, 5.0),
        sigma_m2=st.floats(0.05, 5.0),
        r=st.floats(0.001, 0.95),
    )
    def test_membership_matches_the_bias_bound(self, c1, sigma2, sigma_m2, r):
        region = rc_bias_bound_region(c1, sigma2, sigma_m2, r)
        assume(math.isfinite(region.upper))
        for v2 in (region.lower, region.upper):
            bias = rc_relative_bias(ScalarSetting(c1, sigma2, sigma_m2, v2))
            assert abs(abs(bias) - r) < 1e-9 * max(1.0, 1.0 / v2)
        inside = 0.5 * (region.lower + region.upper)
        assert abs(rc_relative_bias(ScalarSetting(c1, sigma2, sigma_m2, inside))) <= r
        outside_low = region.lower * 0.99
        if outside_low > 0:
            assert (
                abs(rc_relative_bias(ScalarSetting(c1, sigma2, sigma_m2, outside_low))) > r
            )


class TestBiasCurve:
    def test_columns_and_constant_naive(self):
        grid = np.linspace(0.3, 2.0, 9)
        table = bias_curve(1.0, 0.4, 1.0, grid)
        assert table.shape == (9, 3)
        assert np.array_equal(table[:, 0], grid)
        assert np.ptp(table[:, 1]) == 0.0
        assert abs(table[0, 1] + 2.0 / 7.0) < 1e-14

    def test_zero_crossing_at_measurement_variance(self):
        grid = np.array([0.5, 1.0, 1.5])
        table = bias_curve(1.0, 0.4, 1.0, grid)
        assert table[1, 2] == 0.0

    def test_balanced_setting_has_identically_zero_naive_column(self):
        grid = np.linspace(0.2, 2.0, 7)
        table = bias_curve(0.5, 0.25, 1.0, grid)
        assert np.array_equal(table[:, 1], np.zeros(7))

    def test_reference_row(self):
        table = bias_curve(1.0, 0.4, 1.0, np.array([1.2]))
        assert abs(table[0, 1] + 2.0 / 7.0) < 1e-14
        assert abs(table[0, 2] + 1.0 / 21.0) < 1e-14

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            bias_curve(1.0, 0.4, 1.0, np.array([]))
        with pytest.raises(ValueError):
            bias_curve(1.0, 0.4, 1.0, np.array([0.5, -1.0]))

    def test_csv_round_trip(self):
        grid = np.linspace(0.3, 2.0, 5)
        text = bias_curve_csv(1.0, 0.4, 1.0, grid)
        lines = text.splitlines()
        assert lines[0] == "sigma_v2,naive_bias,rc_bias"
        assert len(lines) == 6
        assert text.endswith("\n")
        parsed = np.array(
            [[float(cell) for cell in line.split(",")] for line in lines[1:]]
        )
        assert np.array_equal(parsed, bias_curve(1.0, 0.4, 1.0, grid))


class TestTransforms:
    def test_closed_form_pair_and_objective(self):
        pair = optimal_transform(1.0, 1.0, 1.0)
        assert np.allclose(pair.L1, [[1.0]])
        assert np.allclose(pair.L2, [[1.0]])
        value = transform_objective(pair.L1, pair.L2, 1.0, 1.0, 1.0, 1.0)
        assert abs(value - 0.5) < 1e-14

    def test_perturbed_pair_is_worse(self):
        value = transform_objective(1.0, 1.5, 1.0, 1.0, 1.0, 1.0)
        assert abs(value - 0.52) < 1e-12
        assert value > 0.5

    def test_zero_scale_rejected(self):
        with pytest.raises(ValueError):
            optimal_transform(1.0, 1.0, 1.0, k=0.0)

    def test_degenerate_combination_rejected(self):
        with pytest.raises(DegenerateTransformError):
            transform_objective(1.0, -1.0, 1.0, 1.0, 1.0, 1.0)

    def test_matrix_objective_runs(self):
        rng = np.random.default_rng(24)
        C1 = np.eye(2) + 0.1 * rng.standard_normal((2, 2))
        Sigma = _random_pd(rng, 2)
        Sigma_v = _random_pd(rng, 2)
        alpha = np.array([1.0, -1.0])
        pair = optimal_transform(C1, Sigma, Sigma_v)
        best = transform_objective(pair.L1, pair.L2, C1, Sigma, Sigma_v, alpha)
        worse = transform_objective(
            pair.L1 + 0.2, pair.L2 - 0.1, C1, Sigma, Sigma_v, alpha
        )
        assert best < worse

    @settings(max_examples=60, deadline=None)
    @given(k=st.floats(0.05, 20.0))
    def test_objective_invariant_to_common_scale(self, k):
        base = transform_objective(0.7, 1.3, 1.0, 1.0, 1.0, 1.0)
        scaled = transform_objective(0.7 * k, 1.3 * k, 1.0, 1.0, 1.0, 1.0)
        assert abs(base - scaled) < 1e-10 * max(1.0, abs(base))


class TestOptimalityOracle:
    def test_default_grid_attains_the_closed_form(self):
        report = optimality_oracle(1.0, 1.0, 1.0)
        assert report.attained
        assert abs(report.objective_closed - 0.5) < 1e-14
        assert report.grid_minimum >= report.objective_closed - 1e-12
        assert report.skipped > 0
        assert report.scale_invariance_max_rel_err <= 1e-12
        assert report.grid_points == 601

    def test_other_settings_attain(self):
        rng = np.random.default_rng(25)
        for _ in range(3):
            c1 = float(rng.uniform(0.3, 1.8)) * float(rng.choice([-1.0, 1.0]))
            sigma = float(rng.uniform(0.3, 2.5))
            sigma_v = float(rng.uniform(0.3, 2.5))
            alpha = float(rng.uniform(0.5, 2.0))
            report = optimality_oracle(c1, sigma, sigma_v, alpha=alpha)
            assert report.attained, (c1, sigma, sigma_v, alpha)

    def test_matrix_inputs_rejected(self):
        with pytest.raises(ValueError):
            optimality_oracle(np.eye(2), np.eye(2), np.eye(2))

    def test_bad_grid_rejected(self):
        with pytest.raises(ValueError):
            optimality_oracle(1.0, 1.0, 1.0, grid_points=1)
