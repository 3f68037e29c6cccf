import unittest

import numpy as np

from jacobicast import (
    DomainError,
    ModelKind,
    ModelParams,
    SingularityError,
    check_conditions,
    drift_v,
    drift_z,
    drift_z_prime,
    lamperti_forward,
    lamperti_inverse,
    theta_t,
)
from jacobicast.forecast import ForecastCurve
from jacobicast.model import (
    ExtendedParams,
    Violation,
    condition_b_bound,
    diffusion_v,
    drift_z_guarded,
    drift_z_unsubstituted,
    fold_z,
    pull_inside,
    x_from_z,
    z_range,
)
from jacobicast.schedules import ConstantSchedule
from tests.fixtures import constant_curve


class TestModelParams(unittest.TestCase):
    def test_rejects_nonpositive_theta0(self):
        """theta0 must be strictly positive"""
        with self.assertRaises(DomainError):
            ModelParams(theta0=0.0, alpha=0.1)
        with self.assertRaises(DomainError):
            ModelParams(theta0=-1.0, alpha=0.1)

    def test_rejects_negative_alpha(self):
        with self.assertRaises(DomainError):
            ModelParams(theta0=1.0, alpha=-0.1)

    def test_kind_accepts_model_numbers(self):
        self.assertIs(ModelParams(1.0, 0.1, kind=1).kind, ModelKind.PLAIN)
        self.assertIs(ModelParams(1.0, 0.1, kind="2").kind, ModelKind.DERIVATIVE_TRACKING)
        with self.assertRaises(DomainError):
            ModelKind.parse(3)

    def test_plain_always_uses_constant_rate(self):
        params = ModelParams(1.0, 0.1, kind=ModelKind.PLAIN)
        self.assertEqual(params.rate_schedule.name, "constant")
        self.assertEqual(theta_t(params, 0.05, 0.0), 1.0)

    def test_extended_params_need_positive_delta(self):
        base = ModelParams(1.0, 0.1)
        self.assertEqual(ExtendedParams(base, 0.05).to_dict()["delta"], 0.05)
        with self.assertRaises(DomainError):
            ExtendedParams(base, 0.0)


class TestRates(unittest.TestCase):
    def test_theta_t_examples(self):
        """Hand-evaluated forecast-bound rates"""
        self.assertAlmostEqual(theta_t(ModelParams(1.0, 0.1), 0.5, 0.0), 1.0)
        self.assertAlmostEqual(theta_t(ModelParams(1.0, 0.1), 0.05, 0.0), 2.0)
        self.assertAlmostEqual(theta_t(ModelParams(2.0, 0.0), 0.5, 0.0), 2.0)

    def test_theta_t_uses_absolute_slope(self):
        params = ModelParams(1.0, 0.1)
        self.assertAlmostEqual(theta_t(params, 0.2, 0.3), theta_t(params, 0.2, -0.3))
        self.assertAlmostEqual(theta_t(params, 0.2, 0.3), (0.1 + 0.3) / 0.2)

    def test_theta_t_rejects_forecast_on_boundary(self):
        with self.assertRaises(DomainError):
            theta_t(ModelParams(1.0, 0.1), 0.0, 0.0)
        with self.assertRaises(DomainError):
            theta_t(ModelParams(1.0, 0.1), np.array([0.5, 1.0]), 0.0)

    def test_theta_t_vectorizes(self):
        rates = theta_t(ModelParams(1.0, 0.1), np.array([0.5, 0.05]), np.zeros(2))
        np.testing.assert_allclose(rates, [1.0, 2.0])


class TestDrift(unittest.TestCase):
    def test_zero_error_has_zero_drift(self):
        for p, p_dot in [(0.5, 0.0), (0.2, 0.4), (0.9, -0.3)]:
            self.assertEqual(drift_v(0.0, p, p_dot, ModelParams(1.9, 0.05)), 0.0)

    def test_drift_v_examples(self):
        # theta0 = 2 dominates the bound 0.2 / 0.5 = 0.4
        self.assertAlmostEqual(drift_v(0.1, 0.5, 0.0, ModelParams(2.0, 0.1)), -0.2)
        self.assertAlmostEqual(drift_v(-0.1, 0.5, 0.0, ModelParams(1.5, 0.1, kind=ModelKind.PLAIN)), 0.15)

    def test_plain_error_drift_carries_forecast_slope(self):
        plain = ModelParams(1.5, 0.1, kind=ModelKind.PLAIN)
        self.assertAlmostEqual(drift_v(0.0, 0.5, 0.3, plain), -0.3)

    def test_diffusion_examples(self):
        params = ModelParams(2.0, 1.0)
        self.assertAlmostEqual(diffusion_v(0.0, 0.5, params), 1.0)
        self.assertEqual(diffusion_v(-0.5, 0.5, params), 0.0)
        self.assertEqual(diffusion_v(0.5, 0.5, params), 0.0)
        self.assertAlmostEqual(diffusion_v(-0.3, 0.5, params), diffusion_v(0.3, 0.5, params))

    def test_diffusion_rejects_state_outside_unit_interval(self):
        with self.assertRaises(DomainError):
            diffusion_v(0.6, 0.5, ModelParams(1.0, 0.1))


class TestLamperti(unittest.TestCase):
    def setUp(self):
        # αθ0 = 2
        self.params = ModelParams(2.0, 1.0)

    def test_forward_examples(self):
        self.assertEqual(lamperti_forward(0.5, 0.5, self.params), 0.0)
        self.assertAlmostEqual(lamperti_forward(0.0, 0.5, self.params), -np.pi / 4, places=12)
        self.assertAlmostEqual(lamperti_forward(-0.5, 0.5, self.params), -np.pi / 2, places=12)
        self.assertAlmostEqual(z_range(self.params)[0], -np.pi / 2)

    def test_inverse_examples(self):
        self.assertAlmostEqual(lamperti_inverse(0.0, 0.3, self.params), 0.7, places=12)
        self.assertAlmostEqual(lamperti_inverse(-np.pi / 4, 0.5, self.params), 0.0, places=12)

    def test_round_trip(self):
        rng = np.random.default_rng(3)
        p = rng.uniform(0.02, 0.98, 1000)
        v = rng.uniform(0.0, 1.0, 1000) - p
        back = lamperti_inverse(lamperti_forward(v, p, self.params), p, self.params)
        self.assertLess(np.max(np.abs(back - v)), 1e-12)

    def test_inverse_rejects_z_outside_range(self):
        with self.assertRaises(DomainError):
            lamperti_inverse(0.1, 0.5, self.params)
        with self.assertRaises(DomainError):
            lamperti_inverse(-2.0, 0.5, self.params)

    def test_zero_diffusion_has_no_transform(self):
        with self.assertRaises(DomainError):
            lamperti_forward(0.0, 0.5, ModelParams(1.0, 0.0))

    def test_x_from_z_stays_in_unit_interval(self):
        x = x_from_z(np.linspace(-5.0, 5.0, 101), self.params)
        self.assertTrue(np.all((x >= 0.0) & (x <= 1.0)))

    def test_fold_reflects_at_both_ends(self):
        z = np.array([0.1, -np.pi / 2 - 0.2, -0.3 + 2.0 * np.pi, -0.3])
        folded, outside = fold_z(z, self.params)
        np.testing.assert_allclose(folded, [-0.1, -np.pi / 2 + 0.2, -0.3, -0.3], atol=1e-12)
        np.testing.assert_array_equal(outside, [True, True, True, False])
        np.testing.assert_allclose(x_from_z(folded, self.params), x_from_z(z, self.params), atol=1e-12)

    def test_pull_inside(self):
        x, moved = pull_inside([0.0, 0.5, 1.0], 0.02)
        np.testing.assert_allclose(x, [0.02, 0.5, 0.98])
        np.testing.assert_array_equal(moved, [True, False, True])
        with self.assertRaises(DomainError):
            pull_inside([0.5], 0.5)


class TestLampertiDrift(unittest.TestCase):
    def test_dual_forms_agree(self):
        """Substituted and unsubstituted drift agree on random interior points"""
        rng = np.random.default_rng(5)
        for _ in range(50):
            params = ModelParams(rng.uniform(0.5, 5.0), rng.uniform(0.01, 0.5))
            p = rng.uniform(0.05, 0.95, 20)
            p_dot = rng.uniform(-0.5, 0.5, 20)
            z = lamperti_forward(rng.uniform(0.05, 0.95, 20) - p, p, params)
            a = drift_z(z, p, p_dot, params)
            b = drift_z_unsubstituted(z, p, p_dot, params)
            np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-10)

    def test_derivative_matches_finite_differences(self):
        rng = np.random.default_rng(6)
        h = 1e-5
        for _ in range(100):
            params = ModelParams(rng.uniform(0.5, 5.0), rng.uniform(0.01, 0.5))
            p, p_dot = rng.uniform(0.1, 0.9), rng.uniform(-0.3, 0.3)
            z = lamperti_forward(rng.uniform(0.1, 0.9) - p, p, params)
            fd = (drift_z(z + h, p, p_dot, params) - drift_z(z - h, p, p_dot, params)) / (2 * h)
            exact = drift_z_prime(z, p, p_dot, params)
            self.assertLess(abs(exact - fd), 1e-5 * max(1.0, abs(exact)))

    def test_symmetric_midpoint_is_stationary(self):
        params = ModelParams(1.9, 0.05)
        midpoint = -np.pi / (2 * np.sqrt(2 * params.product))
        self.assertAlmostEqual(drift_z(midpoint, 0.5, 0.0, params), 0.0, places=10)
        # mean reversion: θ_t > αθ0 makes the drift decreasing through the midpoint
        self.assertLess(drift_z_prime(midpoint, 0.5, 0.0, params), 0.0)

    def test_flat_drift_when_rate_equals_product(self):
        params = ModelParams(2.0, 1.0, schedule=ConstantSchedule())
        z = np.linspace(-1.5, -0.1, 9)
        np.testing.assert_allclose(drift_z_prime(z, 0.5, 0.0, params), 0.0, atol=1e-12)

    def test_boundary_is_singular(self):
        params = ModelParams(2.0, 1.0)
        with self.assertRaises(SingularityError):
            drift_z(0.0, 0.5, 0.0, params)
        with self.assertRaises(SingularityError):
            drift_z(z_range(params)[0], 0.5, 0.0, params)

    def test_guarded_drift_clamps_boundary_points(self):
        params = ModelParams(2.0, 1.0)
        drift, deriv, moved = drift_z_guarded(np.array([0.0, -0.5, z_range(params)[0]]), 0.5, 0.0, params)
        self.assertEqual(moved, 2)
        self.assertTrue(np.all(np.isfinite(drift)) and np.all(np.isfinite(deriv)))


class TestValidity(unittest.TestCase):
    def test_forecast_bound_rate_satisfies_boundary_condition(self):
        rng = np.random.default_rng(8)
        curve = ForecastCurve(np.arange(25.0), rng.uniform(0.02, 0.98, 25), 0.02)
        report = check_conditions(curve, ModelParams(1.9, 0.05), np.linspace(0.0, 24.0, 500))
        self.assertTrue(report.condition_b_ok)

    def test_constant_forecast_satisfies_existence_condition(self):
        report = check_conditions(constant_curve(0.5), ModelParams(1.0, 0.1, schedule=ConstantSchedule()))
        self.assertTrue(report.condition_a_ok)

    def test_constant_rate_violation_is_reported(self):
        curve = ForecastCurve(np.array([0.0, 1.0]), np.array([0.6, 0.1]), 0.02)
        params = ModelParams(1.0, 0.1, schedule=ConstantSchedule())
        self.assertAlmostEqual(condition_b_bound(params, 0.1, -0.5), 6.0)
        report = check_conditions(curve, params, np.array([1.0]))
        self.assertFalse(report.ok)
        self.assertEqual(len(report.violations_b), 1)
        violation = report.violations_b[0]
        self.assertIsInstance(violation, Violation)
        self.assertAlmostEqual(violation.time, 1.0)
        self.assertAlmostEqual(violation.lhs, 6.0)
        self.assertAlmostEqual(violation.rhs, 1.0)
        self.assertIn("violations_b", report.to_dict())


if __name__ == '__main__':
    unittest.main()
