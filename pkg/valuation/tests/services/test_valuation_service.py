"""
Unit tests for the valuation service and the metric conversions.
"""

import math
import unittest

import numpy as np
from django.core.cache import cache

from valuation.services.dataset_service import DatasetService
from valuation.services.entropy import gaussian_entropy
from valuation.services.models.data_models import (
    AchievablePerformance,
    EstimationMethod,
    MiEstimate,
    SolverConfig,
)
from valuation.services.valuation_service import (
    ValuationService,
    best_accuracy,
    best_log_likelihood,
    best_r2,
    best_rmse,
    diagnostics_bounds,
    is_likely_overfit,
    suboptimality_gap,
)


def achievable(**metrics):
    metrics.setdefault("best_r2", 0.5)
    metrics.setdefault("best_log_likelihood", -1.0)
    return AchievablePerformance(
        mi=MiEstimate(value=0.35, method=EstimationMethod.MIND_DUAL), **metrics
    )


class ConversionTestCase(unittest.TestCase):
    """Test case for the closed-form metric conversions."""

    def test_best_r2(self):
        self.assertEqual(best_r2(0.0), 0.0)
        self.assertAlmostEqual(best_r2(0.5 * math.log(2)), 0.5, places=12)
        self.assertAlmostEqual(best_r2(50.0), 1.0)
        with self.assertRaises(ValueError):
            best_r2(-0.1)

    def test_best_rmse(self):
        self.assertEqual(best_rmse(0.0, 4.0), 2.0)
        self.assertAlmostEqual(best_rmse(0.5 * math.log(2), 4.0), math.sqrt(2.0), places=12)
        with self.assertRaises(ValueError):
            best_rmse(0.1, -1.0)

    def test_best_accuracy_endpoints(self):
        self.assertAlmostEqual(best_accuracy(0.0, [0.5, 0.5]), 0.5, places=9)
        self.assertAlmostEqual(best_accuracy(math.log(2), [0.5, 0.5]), 1.0, places=9)
        self.assertAlmostEqual(best_accuracy(10.0, [0.2, 0.3, 0.5]), 1.0, places=9)

    def test_best_accuracy_never_below_majority_class(self):
        self.assertAlmostEqual(best_accuracy(0.0, [0.9, 0.1]), 0.9, places=9)
        self.assertGreaterEqual(best_accuracy(0.01, [0.7, 0.2, 0.1]), 0.7)

    def test_best_accuracy_errors(self):
        with self.assertRaises(ValueError):
            best_accuracy(0.1, [1.0])
        with self.assertRaises(ValueError):
            best_accuracy(0.1, [0.6, 0.6])

    def test_best_log_likelihood(self):
        self.assertAlmostEqual(best_log_likelihood(0.3, 1.0), -0.7)

    def test_monotone_in_mi(self):
        grid = np.linspace(0.0, 2.0, 41)
        r2 = [best_r2(mi) for mi in grid]
        rmse = [best_rmse(mi, 2.0) for mi in grid]
        accuracy = [best_accuracy(mi, [0.5, 0.3, 0.2]) for mi in grid]
        self.assertTrue(np.all(np.diff(r2) > 0))
        self.assertTrue(np.all(np.diff(rmse) < 0))
        self.assertTrue(np.all(np.diff(accuracy) >= -1e-12))

    def test_hellman_raviv(self):
        self.assertAlmostEqual(
            diagnostics_bounds(0.0, math.log(2), q=2).hellman_raviv_lower, 0.5
        )
        self.assertAlmostEqual(
            diagnostics_bounds(math.log(2), math.log(2), q=2).hellman_raviv_lower, 1.0
        )
        self.assertIsNone(diagnostics_bounds(0.0, math.log(2), q=2).brillinger_mse_lower)

    def test_brillinger_on_gaussian_target(self):
        entropy = gaussian_entropy(1.0)
        self.assertAlmostEqual(
            diagnostics_bounds(0.0, entropy, variance=1.0).brillinger_mse_lower, 1.0
        )
        self.assertAlmostEqual(
            diagnostics_bounds(0.5 * math.log(2), entropy, variance=1.0).brillinger_mse_lower,
            0.5,
        )

    def test_brillinger_capped_by_variance(self):
        """Test an overestimated entropy never lifts the bound above the variance."""
        bound = diagnostics_bounds(0.0, gaussian_entropy(1.0) + 1.0, variance=1.0)
        self.assertAlmostEqual(bound.brillinger_mse_lower, 1.0)


class GapTestCase(unittest.TestCase):
    """Test case for suboptimality_gap and is_likely_overfit."""

    def test_accuracy_gaps(self):
        best = achievable(best_accuracy=0.85)
        self.assertAlmostEqual(suboptimality_gap(0.80, best, "accuracy"), 0.05)
        self.assertAlmostEqual(suboptimality_gap(0.85, best, "accuracy"), 0.0)
        self.assertAlmostEqual(suboptimality_gap(1.05, best, "accuracy"), -0.2)

    def test_rmse_gap_sign(self):
        best = achievable(best_rmse=1.0)
        self.assertAlmostEqual(suboptimality_gap(1.2, best, "rmse"), 0.2)
        self.assertAlmostEqual(suboptimality_gap(0.9, best, "rmse"), -0.1)

    def test_unknown_or_missing_metric(self):
        with self.assertRaises(ValueError):
            suboptimality_gap(0.5, achievable(), "f1")
        with self.assertRaises(ValueError):
            suboptimality_gap(0.5, achievable(), "accuracy")

    def test_is_likely_overfit(self):
        self.assertTrue(is_likely_overfit(-0.2))
        self.assertFalse(is_likely_overfit(0.0))
        self.assertFalse(is_likely_overfit(-0.01, threshold=0.02))
        self.assertTrue(is_likely_overfit(-0.03, threshold=0.02))


class ValuationServiceTestCase(unittest.TestCase):
    """Test case for ValuationService."""

    def setUp(self):
        cache.clear()
        self.service = ValuationService(SolverConfig())
        self.datasets = DatasetService()

    def tearDown(self):
        cache.clear()

    def regression(self, n=3_000, seed=0):
        rng = np.random.default_rng(seed)
        x0, x1, noise = rng.normal(size=(3, n))
        return self.datasets.from_arrays(
            {"x0": x0, "x1": x1, "z": rng.normal(size=n), "y": 0.8 * x0 + 0.6 * noise},
            target="y",
        )

    def test_regression_value(self):
        dataset = self.regression()
        performance = self.service.value(dataset, ["x0"])
        variance = float(np.var(dataset.column("y"), ddof=1))

        self.assertAlmostEqual(performance.best_r2, 0.64, delta=0.06)
        self.assertAlmostEqual(performance.best_rmse, math.sqrt(variance * 0.36), delta=0.06)
        self.assertIsNone(performance.best_accuracy)
        self.assertIsNotNone(performance.diagnostics.brillinger_mse_lower)
        self.assertEqual(performance.features, ("x0",))

    def test_metrics_follow_from_mi(self):
        """Test every reported metric is the conversion of the reported mi."""
        dataset = self.regression(seed=1)
        performance = self.service.value(dataset, ["x0", "x1"])
        variance = float(np.var(dataset.column("y"), ddof=1))
        self.assertEqual(performance.best_r2, best_r2(performance.mi.value))
        self.assertEqual(performance.best_rmse, best_rmse(performance.mi.value, variance))

    def test_empty_feature_set(self):
        dataset = self.regression(seed=2)
        performance = self.service.value(dataset, [])
        self.assertEqual(performance.mi.value, 0.0)
        self.assertEqual(performance.best_r2, 0.0)
        self.assertAlmostEqual(
            performance.best_rmse, float(np.std(dataset.column("y"), ddof=1)), places=12
        )

    def test_classification_value(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=3_000)
        y = (x + 0.5 * rng.normal(size=3_000) > 0).astype(int)
        dataset = self.datasets.from_arrays({"x": x, "y": y}, target="y", categorical=["y"])
        performance = self.service.value(dataset, ["x"])

        self.assertEqual(performance.q, 2)
        self.assertIsNone(performance.best_rmse)
        self.assertGreater(performance.best_accuracy, 0.8)
        self.assertLessEqual(performance.best_accuracy, 1.0)
        self.assertGreaterEqual(
            performance.best_accuracy, performance.diagnostics.hellman_raviv_lower - 1e-9
        )
        self.assertAlmostEqual(
            performance.best_r2_normalized, performance.best_r2 / 0.75, places=12
        )

    def test_incremental_value_of_duplicate(self):
        dataset = self.regression(seed=4)
        increment = self.service.incremental_value(dataset, ["x0"], ["x0"])
        self.assertEqual(increment.combined.features, ("x0",))
        for metric, boost in increment.boost.items():
            with self.subTest(metric=metric):
                self.assertEqual(boost, 0.0)

    def test_incremental_value_of_noise_and_signal(self):
        rng = np.random.default_rng(5)
        x0, x1, noise = rng.normal(size=(3, 3_000))
        dataset = self.datasets.from_arrays(
            {"x0": x0, "x1": x1, "z": rng.normal(size=3_000), "y": x0 + x1 + 0.5 * noise},
            target="y",
        )
        useless = self.service.incremental_value(dataset, ["x0"], ["z"])
        self.assertLess(useless.boost["mi"], 0.03)

        useful = self.service.incremental_value(dataset, ["x0"], ["x1"])
        self.assertGreater(useful.boost["r2"], 0.2)
        self.assertGreater(useful.boost["rmse"], 0.0)
        self.assertGreaterEqual(useful.combined.best_r2, useful.old.best_r2)

    def test_one_vs_rest_accuracy(self):
        rng = np.random.default_rng(6)
        dataset = self.datasets.from_arrays(
            {
                "x1": rng.normal(size=3_000),
                "x2": rng.normal(size=3_000),
                "y": rng.integers(0, 3, size=3_000),
            },
            target="y",
            categorical=["y"],
        )
        accuracy = self.service.one_vs_rest_accuracy(dataset, ["x1", "x2"], 0)
        self.assertAlmostEqual(accuracy, 2.0 / 3.0, delta=0.03)

        with self.assertRaises(ValueError):
            self.service.one_vs_rest_accuracy(dataset, ["x1"], 3)
        binary = self.datasets.from_arrays(
            {"x": rng.normal(size=100), "y": rng.integers(0, 2, size=100)},
            target="y",
            categorical=["y"],
        )
        with self.assertRaises(ValueError):
            self.service.one_vs_rest_accuracy(binary, ["x"], 0)

    def test_model_generalized_metrics(self):
        rng = np.random.default_rng(7)
        y, noise = rng.normal(size=(2, 3_000))

        independent = self.service.model_generalized_metrics(y, rng.normal(size=3_000))
        self.assertAlmostEqual(independent.generalized_r2, 0.0, delta=0.05)

        z = 0.8 * y + 0.6 * noise + 0.5
        metrics = self.service.model_generalized_metrics(y, z)
        self.assertAlmostEqual(metrics.generalized_r2, 0.64, delta=0.06)
        # Var(y) e^(-2 I) + bias² with bias -0.5
        self.assertAlmostEqual(metrics.generalized_mse, 0.36 + 0.25, delta=0.08)

    def test_model_generalized_metrics_categorical(self):
        rng = np.random.default_rng(8)
        y = rng.integers(0, 2, size=2_000)
        flips = rng.random(2_000) < 0.1
        metrics = self.service.model_generalized_metrics(y, y ^ flips, categorical=True)
        self.assertGreater(metrics.generalized_r2, 0.3)
        self.assertIsNone(metrics.generalized_mse)

    def test_model_generalized_metrics_length_mismatch(self):
        with self.assertRaises(ValueError):
            self.service.model_generalized_metrics([1.0, 2.0, 3.0], [1.0, 2.0])
