import unittest

import numpy as np

from jacobicast import (
    CalibrationResult,
    DataError,
    DegenerateDataError,
    DomainError,
    FitMethod,
    FixedPointConfig,
    ModelKind,
    ModelParams,
    OptimizerConfig,
    calibrate,
    compare_models,
    delta_surface,
    fit_complete,
    fit_delta,
    fit_v_space,
    fit_z_space_fixed_point,
    guess_product,
    guess_theta0,
    initial_guess,
    loglik_surface,
    loglik_v,
    multi_start,
)
from jacobicast.calibrate import THETA0_FLOOR, evaluate_loglik
from jacobicast.forecast import SegmentSet
from jacobicast.simulate import SimConfig, compare_transitions, derive_seed, lamperti_paths, lamperti_transitions, simulate_paths
from jacobicast.synthetic import simulate_segment_set
from tests.fixtures import REFERENCE, make_segment, synthetic_set

QUICK = OptimizerConfig(xtol=1e-4, ftol=1e-7, max_evals=400)


def _decaying_errors(rate=2.0, step=0.1, n=12, v0=0.1):
    v = v0 * (1.0 - rate * step) ** np.arange(n)
    return make_segment(0.5 + v, np.full(n, 0.5), delta_hours=step)


class TestInitialGuess(unittest.TestCase):
    def test_noiseless_decay_is_recovered(self):
        data = SegmentSet([_decaying_errors()])
        self.assertAlmostEqual(guess_theta0(data), 2.0, places=10)

    def test_flat_errors_are_floored(self):
        data = SegmentSet([make_segment([0.6, 0.6], [0.5, 0.5])])
        with self.assertLogs("jacobicast.calibrate", level="WARNING"):
            self.assertEqual(guess_theta0(data), THETA0_FLOOR)
        with self.assertLogs("jacobicast.calibrate", level="WARNING"):
            guess = initial_guess(data)
        self.assertEqual(guess.flags, {"theta0_clamped": 1, "product_floor": 1})

    def test_zero_starting_errors_are_degenerate(self):
        data = SegmentSet([make_segment([0.5, 0.6], [0.5, 0.5])])
        with self.assertRaises(DegenerateDataError):
            guess_theta0(data)
        with self.assertLogs("jacobicast.calibrate", level="WARNING"):
            guess = initial_guess(data)
        self.assertEqual(guess.theta0_star, 1.0)
        self.assertIn("theta0_degenerate", guess.flags)

    def test_constant_path_has_no_quadratic_variation(self):
        data = SegmentSet([make_segment(np.full(10, 0.4), np.full(10, 0.5))])
        self.assertEqual(guess_product(data), 0.0)

    def test_guess_is_in_the_right_range(self):
        guess = initial_guess(synthetic_set())
        self.assertLess(abs(guess.product - REFERENCE.product) / REFERENCE.product, 0.5)

    def test_empty_data(self):
        with self.assertRaises(DegenerateDataError):
            guess_product(SegmentSet([]))


class TestVSpaceFit(unittest.TestCase):
    def test_recovers_the_product(self):
        result = fit_v_space(synthetic_set())
        self.assertLess(abs(result.product - REFERENCE.product) / REFERENCE.product, 0.2)
        self.assertEqual(result.k, 2)
        self.assertEqual(result.method, FitMethod.V_BETA)
        self.assertEqual(result.loglik.n_transitions, synthetic_set().n_transitions)
        self.assertTrue(result.optimizer.converged)

    def test_fit_beats_its_start(self):
        data = synthetic_set()
        result = fit_v_space(data, start=(1.0, 0.2), cfg=QUICK)
        start_value = loglik_v(ModelParams(1.0, 0.2), data, 0.02).value
        self.assertGreater(result.loglik.value, start_value)

    def test_unknown_proxy(self):
        with self.assertRaises(DomainError):
            fit_v_space(synthetic_set(), proxy="laplace")

    def test_ridge_fits_agree_on_the_product(self):
        fits = multi_start(synthetic_set(), [(1.0, 0.1), (4.0, 0.025)])
        products = [f.product for f in fits]
        self.assertLess(abs(products[0] - products[1]) / products[0], 0.05)

    def test_evaluate_uses_the_fitted_likelihood(self):
        data = synthetic_set()
        result = fit_v_space(data, cfg=QUICK)
        self.assertEqual(evaluate_loglik(result, data).value, result.loglik.value)


class TestFixedPointFit(unittest.TestCase):
    def test_trace_and_estimate(self):
        result = fit_z_space_fixed_point(synthetic_set(), cfg=QUICK, fp_cfg=FixedPointConfig(max_iters=10, fp_tol=1e-2))
        trace = result.trace
        self.assertEqual(result.method, FitMethod.Z_FIXED_POINT)
        self.assertGreaterEqual(len(trace.iterates), 1)
        self.assertEqual(len(trace.inner_residuals), len(trace.residuals) + int(trace.converged))
        if trace.converged:
            self.assertLess(trace.inner_residuals[-1], 1e-2)
        self.assertLess(abs(result.product - REFERENCE.product) / REFERENCE.product, 0.25)

    def test_config_validation(self):
        with self.assertRaises(DomainError):
            FixedPointConfig(damping=1.0)
        with self.assertRaises(DomainError):
            FixedPointConfig(max_iters=0)


class TestDeltaFit(unittest.TestCase):
    def test_zero_initial_errors_push_delta_to_the_lower_bound(self):
        data = SegmentSet([make_segment([0.5, 0.52, 0.5], [0.5, 0.5, 0.5], seg_id=f"s{i}") for i in range(4)])
        with self.assertLogs("jacobicast.calibrate", level="WARNING"):
            estimate = fit_delta(REFERENCE, data)
        self.assertTrue(estimate.at_boundary)
        self.assertAlmostEqual(estimate.delta, data.delta_hours / 10.0, places=6)

    def test_empty_set(self):
        with self.assertRaises(DataError):
            fit_delta(REFERENCE, SegmentSet([]))

    def test_complete_fit_has_three_parameters(self):
        data = synthetic_set(n_segments=6, seed=5, delta=0.5)
        result = fit_complete(data, cfg=QUICK)
        self.assertEqual(result.k, 3)
        self.assertGreater(result.delta, 0.0)
        self.assertEqual(result.method, FitMethod.COMPLETE)
        self.assertEqual(result.criteria.n, data.n_transitions + len(data))
        self.assertIsNotNone(result.initial.delta_star)

    def test_delta_surface_columns(self):
        frame = delta_surface(synthetic_set(n_segments=6, seed=5, delta=0.5), [(1.9, 0.095)])
        self.assertEqual(list(frame.columns), ["theta0", "alpha", "product", "delta", "at_boundary"])
        self.assertAlmostEqual(frame["product"][0], 0.095)


class TestFittedModelReproducesTransitions(unittest.TestCase):
    def test_simulated_transitions_match_the_data(self):
        """Paths simulated from the fitted model have the data's V and Z transition histograms"""
        data = synthetic_set()
        fitted = fit_v_space(data, cfg=QUICK).params
        observed_v, simulated_v, simulated_z = [], [], []
        for j, prepared in enumerate(data.prepared(0.02)):
            cfg = SimConfig(n_paths=100, seed=derive_seed(21, j))
            bundle = simulate_paths(fitted, prepared.curve, prepared.times, cfg, v0=float(prepared.errors[0]))
            observed_v.append(np.diff(prepared.errors))
            simulated_v.append(np.diff(bundle.errors, axis=-1).ravel())
            simulated_z.append(np.diff(lamperti_paths(bundle, fitted), axis=-1).ravel())
        v = compare_transitions(np.concatenate(observed_v), np.concatenate(simulated_v), bins=30)
        z = compare_transitions(lamperti_transitions(data, fitted), np.concatenate(simulated_z), bins=30)
        self.assertLess(v.distance, 0.1)
        self.assertLess(z.distance, 0.1)


class TestDispatchAndComparison(unittest.TestCase):
    def test_dispatch(self):
        with self.assertRaises(DomainError):
            calibrate(synthetic_set(), "least_squares")
        with self.assertRaises(DataError):
            calibrate(SegmentSet([], role="train"), FitMethod.V_BETA)
        result = calibrate(synthetic_set(), "v_gauss", kind=1, cfg=QUICK)
        self.assertEqual(result.method, FitMethod.V_GAUSS)
        self.assertIs(result.params.kind, ModelKind.PLAIN)

    def test_duplicated_providers_give_identical_rows(self):
        a = simulate_segment_set(REFERENCE, 8, seed=21, provider="a")
        b = simulate_segment_set(REFERENCE, 8, seed=21, provider="b")
        data = SegmentSet(a.segments + b.segments)
        table = compare_models(data, models=(2,), methods=("v_beta",), cfg=QUICK, threads=2)
        self.assertEqual([r.provider for r in table.rows], ["a", "b"])
        self.assertEqual(table.rows[0].aic, table.rows[1].aic)
        self.assertEqual(table.rows[0].theta0, table.rows[1].theta0)

    def test_failed_cells_are_listed_last(self):
        data = synthetic_set()
        with self.assertLogs("jacobicast.calibrate", level="ERROR"):
            table = compare_models(data, providers=["synthetic", "nowhere"], models=(1, 2), methods=("v_beta",),
                                   cfg=QUICK)
        self.assertEqual(len(table.rows), 4)
        self.assertTrue(all(r.error is None for r in table.rows[:2]))
        self.assertTrue(all(r.error is not None for r in table.rows[2:]))
        self.assertLessEqual(table.rows[0].aic, table.rows[1].aic)
        frame = table.to_frame()
        self.assertIn("bic", frame.columns)
        self.assertEqual(len(frame), 4)

    def test_result_record_round_trip(self):
        result = calibrate(synthetic_set(), "v_beta", cfg=QUICK, provider="synthetic")
        record = result.to_dict()
        self.assertEqual(record["model"], 2)
        self.assertEqual(record["schedule"], "forecast_bound")
        loaded = CalibrationResult.from_dict(record)
        self.assertEqual(loaded.params.theta0, result.params.theta0)
        self.assertEqual(loaded.params.alpha, result.params.alpha)
        self.assertEqual(loaded.criteria, result.criteria)
        self.assertIsNone(loaded.delta)
        with self.assertRaises(DataError):
            CalibrationResult.from_dict({"theta0": 1.0})

    def test_loglik_surface(self):
        data = synthetic_set()
        frame = loglik_surface(data, [1.0, 2.0], [0.02, 0.05, 0.1])
        self.assertEqual(len(frame), 6)
        self.assertEqual(list(frame.columns), ["theta0", "alpha", "product", "neg_loglik"])
        self.assertAlmostEqual(frame["neg_loglik"][0], -loglik_v(frame_params(frame, 0), data, 0.02).value)


def frame_params(frame, row):
    return ModelParams(float(frame["theta0"][row]), float(frame["alpha"][row]))


if __name__ == '__main__':
    unittest.main()
