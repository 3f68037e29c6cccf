import os
import tempfile
import unittest

import numpy as np
import pandas as pd

from jacobicast import DomainError, ModelKind, ModelParams, SimConfig, empirical_bands, quadratic_variation, simulate_paths, transition_histogram
from jacobicast.simulate import (
    derive_seed,
    histogram_distance,
    integrated_squared_diffusion,
    lamperti_transitions,
    plain_mean,
    write_bands_csv,
    write_histogram_csv,
    write_paths_csv,
)
from tests.fixtures import REFERENCE, TEN_MINUTES, constant_curve, ramp_curve, synthetic_set

GRID = np.arange(37) * TEN_MINUTES


class TestPaths(unittest.TestCase):
    def test_zero_diffusion_follows_the_forecast(self):
        curve = ramp_curve()
        bundle = simulate_paths(ModelParams(1.9, 0.0), curve, GRID, SimConfig(n_paths=3, seed=1))
        self.assertEqual(bundle.scheme, "v_space_clamped")
        np.testing.assert_allclose(bundle.paths, np.tile(curve.value(GRID), (3, 1)), atol=1e-12)

    def test_paths_stay_in_unit_interval(self):
        for scheme in ("z_space", "v_space_clamped"):
            params = ModelParams(1.0, 0.5)
            bundle = simulate_paths(params, ramp_curve(0.05, 0.95), np.arange(145) * TEN_MINUTES,
                                    SimConfig(n_paths=500, seed=3, scheme=scheme))
            self.assertTrue(np.all((bundle.paths >= 0.0) & (bundle.paths <= 1.0)), scheme)
            self.assertFalse(np.any(bundle.aborted))

    def test_start_at_zero_production_recovers(self):
        """A day starting at 0 MW relaxes to the forecast instead of sticking to the boundary"""
        times = np.arange(145) * TEN_MINUTES
        bundle = simulate_paths(REFERENCE, constant_curve(0.3, end=24.0), times, SimConfig(n_paths=1000, seed=2), v0=-0.3)
        np.testing.assert_allclose(bundle.paths[:, 0], 0.02)
        self.assertGreaterEqual(bundle.n_clamped, 1000)
        self.assertFalse(np.any(bundle.aborted))
        self.assertLess(abs(np.mean(bundle.paths[:, -1]) - 0.3), 0.03)
        self.assertGreater(np.std(bundle.paths[:, -1]), 0.01)

    def test_results_do_not_depend_on_threads(self):
        cfg = dict(n_paths=2500, seed=42)
        one = simulate_paths(REFERENCE, ramp_curve(), GRID, SimConfig(threads=1, **cfg))
        four = simulate_paths(REFERENCE, ramp_curve(), GRID, SimConfig(threads=4, **cfg))
        np.testing.assert_array_equal(one.paths, four.paths)
        self.assertEqual(one.seed, 42)

    def test_drawn_seed_is_reported(self):
        bundle = simulate_paths(REFERENCE, ramp_curve(), GRID, SimConfig(n_paths=5))
        again = simulate_paths(REFERENCE, ramp_curve(), GRID, SimConfig(n_paths=5, seed=bundle.seed))
        np.testing.assert_array_equal(bundle.paths, again.paths)

    def test_delta_start_is_random(self):
        bundle = simulate_paths(REFERENCE, constant_curve(0.5, end=6.0), GRID, SimConfig(n_paths=200, seed=5), delta=0.5)
        self.assertGreater(np.std(bundle.paths[:, 0]), 0.0)
        self.assertLess(abs(np.mean(bundle.paths[:, 0]) - 0.5), 0.05)

    def test_plain_mean_matches_simulation(self):
        params = ModelParams(2.0, 0.05, kind=ModelKind.PLAIN)
        curve = ramp_curve()
        bundle = simulate_paths(params, curve, GRID, SimConfig(n_paths=4000, seed=8))
        expected = plain_mean(curve, params.theta0, GRID)
        np.testing.assert_allclose(bundle.paths.mean(axis=0), expected, atol=0.01)

    def test_plain_mean_closed_form(self):
        curve = ramp_curve()
        slope = 0.4 / 6.0
        expected = curve.value(GRID) - slope * (1.0 - np.exp(-2.0 * GRID)) / 2.0
        np.testing.assert_allclose(plain_mean(curve, 2.0, GRID), expected, atol=1e-12)
        np.testing.assert_allclose(plain_mean(constant_curve(0.4), 1.0, GRID[:7], x0=0.5),
                                   0.4 + 0.1 * np.exp(-GRID[:7]), atol=1e-12)

    def test_invalid_input(self):
        with self.assertRaises(DomainError):
            simulate_paths(REFERENCE, ramp_curve(), [0.0, 0.0, 1.0], SimConfig(n_paths=1))
        with self.assertRaises(DomainError):
            simulate_paths(REFERENCE, ramp_curve(), GRID, SimConfig(n_paths=1), v0=0.9)
        with self.assertRaises(DomainError):
            SimConfig(scheme="milstein")


class TestSeeds(unittest.TestCase):
    def test_derived_seeds(self):
        self.assertEqual(derive_seed(7, 1), derive_seed(7, 1))
        self.assertNotEqual(derive_seed(7, 1), derive_seed(7, 2))
        self.assertNotEqual(derive_seed(7, 1), derive_seed(8, 1))
        self.assertLess(derive_seed(7, 1), 2 ** 63)


class TestPathStatistics(unittest.TestCase):
    def test_quadratic_variation(self):
        self.assertAlmostEqual(quadratic_variation([0.0, 0.1, 0.0]), 0.02)
        np.testing.assert_allclose(quadratic_variation(np.array([[0.0, 1.0], [0.0, 2.0]])), [1.0, 4.0])
        with self.assertRaises(DomainError):
            quadratic_variation([0.5])

    def test_quadratic_variation_approaches_integrated_diffusion(self):
        times = np.arange(24 * 60 + 1) / 60.0
        curve = constant_curve(0.5, end=24.0)
        bundle = simulate_paths(REFERENCE, curve, times, SimConfig(n_paths=50, substeps=2, seed=9))
        realized = quadratic_variation(bundle.errors)
        integrated = integrated_squared_diffusion(REFERENCE, bundle.forecast, bundle.errors, times)
        self.assertLess(abs(np.mean(realized / integrated) - 1.0), 0.05)

    def test_histogram_is_a_density(self):
        rng = np.random.default_rng(0)
        histogram = transition_histogram(np.cumsum(rng.normal(size=500)), bins=20)
        self.assertEqual(len(histogram.density), 20)
        self.assertAlmostEqual(float(np.sum(histogram.density * histogram.widths)), 1.0)

    def test_constant_series_gives_a_spike(self):
        histogram = transition_histogram(np.full(10, 0.3))
        self.assertEqual(len(histogram.density), 1)
        self.assertAlmostEqual(float(histogram.density[0] * histogram.widths[0]), 1.0)

    def test_histogram_distance(self):
        rng = np.random.default_rng(1)
        series = np.cumsum(rng.normal(size=300))
        self.assertEqual(histogram_distance(series, series), 0.0)
        self.assertGreater(histogram_distance(series, 3.0 * series), 0.1)

    def test_lamperti_transitions(self):
        data = synthetic_set()
        steps = lamperti_transitions(data, REFERENCE)
        self.assertEqual(len(steps), data.n_transitions)
        self.assertTrue(np.all(np.isfinite(steps)))


class TestBands(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.curve = ramp_curve()
        cls.bundle = simulate_paths(REFERENCE, cls.curve, GRID, SimConfig(n_paths=2000, seed=12))

    def test_zero_level_is_the_median(self):
        bands = empirical_bands(self.bundle, levels=(0.9, 0.0, 0.5))
        self.assertEqual(bands.levels, [0.0, 0.5, 0.9])
        lower, upper = bands.band(0.0)
        np.testing.assert_allclose(lower, bands.median)
        np.testing.assert_allclose(upper, bands.median)

    def test_bands_are_nested(self):
        bands = empirical_bands(self.bundle)
        for narrow, wide in zip(range(len(bands.levels) - 1), range(1, len(bands.levels))):
            self.assertTrue(np.all(bands.lower[wide] <= bands.lower[narrow]))
            self.assertTrue(np.all(bands.upper[narrow] <= bands.upper[wide]))

    def test_coverage_of_fresh_paths(self):
        bands = empirical_bands(self.bundle, levels=(0.9,))
        fresh = simulate_paths(REFERENCE, self.curve, GRID, SimConfig(n_paths=200, seed=99))
        coverage = np.mean([bands.coverage(path, 0.9) for path in fresh.paths])
        self.assertLess(abs(coverage - 0.9), 0.05)

    def test_bad_levels(self):
        with self.assertRaises(DomainError):
            empirical_bands(self.bundle, levels=(1.0,))

    def test_few_paths_warn(self):
        small = simulate_paths(REFERENCE, self.curve, GRID, SimConfig(n_paths=20, seed=1))
        with self.assertLogs("jacobicast.simulate", level="WARNING"):
            empirical_bands(small)


class TestWriters(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.bundle = simulate_paths(REFERENCE, ramp_curve(), GRID[:4], SimConfig(n_paths=3, seed=2))

    def tearDown(self):
        self.tmp.cleanup()

    def test_paths_csv(self):
        path = os.path.join(self.tmp.name, "paths.csv")
        write_paths_csv(self.bundle, path, n_paths=2)
        frame = pd.read_csv(path)
        self.assertEqual(list(frame.columns), ["time", "path_id", "value"])
        self.assertEqual(len(frame), 8)

    def test_bands_csv(self):
        path = os.path.join(self.tmp.name, "bands.csv")
        bands = empirical_bands(self.bundle, levels=(0.5, 0.9))
        write_bands_csv(bands, path, realized=self.bundle.forecast)
        frame = pd.read_csv(path)
        self.assertEqual(list(frame.columns), ["time", "level", "lower", "upper", "realized"])
        self.assertEqual(sorted(frame["level"].unique()), [0.5, 0.9])

    def test_histogram_csv(self):
        path = os.path.join(self.tmp.name, "hist.csv")
        write_histogram_csv(transition_histogram(self.bundle.paths, bins=5), path)
        self.assertEqual(list(pd.read_csv(path).columns), ["bin_left", "bin_right", "density"])


if __name__ == '__main__':
    unittest.main()
