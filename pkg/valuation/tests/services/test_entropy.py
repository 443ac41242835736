"""
Unit tests for the entropy estimators and the flat-tail entropy function.
"""

import itertools
import math
import unittest

import numpy as np

from valuation.services.base import ConstantColumnError, InsufficientRowsError
from valuation.services.entropy import (
    gaussian_entropy,
    hbar_q,
    hbar_q_inverse,
    joint_codes,
    marginal_diff_entropy,
    sample_variance,
    shannon_entropy,
)
from valuation.services.models.data_models import EntropyKind


def plain_entropy(probabilities):
    return -sum(p * math.log(p) for p in probabilities if p > 0)


class HbarQTestCase(unittest.TestCase):
    """Test case for hbar_q and its inverse."""

    def test_endpoints(self):
        for q in (2, 3, 10):
            self.assertAlmostEqual(hbar_q(1.0, q), 0.0, places=12)
            self.assertAlmostEqual(hbar_q(1.0 / q, q), math.log(q), places=12)

    def test_known_value(self):
        self.assertAlmostEqual(hbar_q(0.75, 2), 0.5623, places=4)

    def test_out_of_range(self):
        with self.assertRaises(ValueError):
            hbar_q(0.4, 2)
        with self.assertRaises(ValueError):
            hbar_q(1.1, 3)
        with self.assertRaises(ValueError):
            hbar_q(0.5, 1)

    def test_decreasing_and_concave(self):
        """Test finite differences are negative and second differences nonpositive."""
        for q in (2, 3, 5, 26):
            grid = np.linspace(1.0 / q, 1.0, 101)
            values = np.array([hbar_q(a, q) for a in grid])
            self.assertTrue(np.all(np.diff(values) < 0))
            self.assertTrue(np.all(np.diff(values, n=2) <= 1e-12))

    def test_inverse_endpoints(self):
        self.assertEqual(hbar_q_inverse(0.0, 4), 1.0)
        self.assertAlmostEqual(hbar_q_inverse(math.log(4), 4), 0.25, places=12)
        self.assertAlmostEqual(hbar_q_inverse(hbar_q(0.75, 2), 2), 0.75, places=8)

    def test_round_trip(self):
        """Test inverse(hbar_q(a)) = a on a 100-point grid for q in 2..26."""
        for q in range(2, 27):
            for a in np.linspace(1.0 / q, 1.0, 100):
                self.assertAlmostEqual(hbar_q_inverse(hbar_q(a, q), q), a, delta=1e-8)

    def test_inverse_accuracy(self):
        """Test the inverse solves hbar_q(a) = h to 1e-10."""
        for h in np.linspace(0.01, math.log(3) - 0.01, 25):
            a = hbar_q_inverse(h, 3)
            self.assertLessEqual(abs(hbar_q(a, 3) - h), 1e-10)

    def test_inverse_range_and_clamp(self):
        with self.assertRaises(ValueError):
            hbar_q_inverse(-0.1, 2)
        with self.assertRaises(ValueError):
            hbar_q_inverse(1.0, 2)
        self.assertEqual(hbar_q_inverse(-0.1, 2, clamp=True), 1.0)
        self.assertAlmostEqual(hbar_q_inverse(1.0, 2, clamp=True), 0.5)

    def test_flat_tail_is_entropy_maximizer(self):
        """Test no distribution with top probability a beats the flat tail."""
        step = 0.01
        for q in (2, 3, 4):
            grid = np.round(np.arange(0.0, 1.0 + step / 2, step), 10)
            for rest in itertools.product(grid, repeat=q - 1):
                a = 1.0 - sum(rest)
                if a < -1e-9 or any(p > a + 1e-9 for p in rest):
                    continue
                a = max(a, 0.0)
                if a < 1.0 / q - 1e-9:
                    continue
                entropy = plain_entropy([a, *rest])
                self.assertLessEqual(entropy, hbar_q(min(max(a, 1.0 / q), 1.0), q) + 1e-9)


class EstimatorTestCase(unittest.TestCase):
    """Test case for the column entropy estimators."""

    def test_shannon(self):
        balanced = shannon_entropy(np.array([0, 1] * 50))
        self.assertAlmostEqual(balanced.value, math.log(2))
        self.assertEqual(balanced.kind, EntropyKind.SHANNON)
        self.assertEqual(balanced.n_used, 100)

        self.assertEqual(shannon_entropy(np.zeros(10, dtype=int)).value, 0.0)
        self.assertAlmostEqual(shannon_entropy(np.array([0, 0, 0, 1])).value, 0.5623, places=4)

        with self.assertRaises(InsufficientRowsError):
            shannon_entropy(np.array([], dtype=int))

    def test_shannon_bounded_by_log_cardinality(self):
        rng = np.random.default_rng(0)
        codes = rng.integers(0, 5, size=300)
        self.assertLessEqual(shannon_entropy(codes).value, math.log(5) + 1e-12)

    def test_joint_codes(self):
        codes = joint_codes(np.array([0, 0, 1, 1]), np.array([0, 1, 0, 0]))
        self.assertEqual(len(set(codes)), 3)
        self.assertEqual(codes[2], codes[3])

    def test_kde_uniform(self):
        values = np.random.default_rng(1).random(10_000)
        estimate = marginal_diff_entropy(values)
        # Boundary smoothing biases the uniform case slightly upwards
        self.assertAlmostEqual(estimate.value, 0.0, delta=0.07)
        self.assertEqual(estimate.kind, EntropyKind.DIFFERENTIAL)
        self.assertIsNotNone(estimate.bandwidth)

    def test_kde_normal(self):
        values = np.random.default_rng(2).standard_normal(10_000)
        self.assertAlmostEqual(
            marginal_diff_entropy(values).value, 0.5 * math.log(2 * math.pi * math.e), delta=0.05
        )

    def test_kde_scaling(self):
        values = np.random.default_rng(3).standard_normal(2_000)
        base = marginal_diff_entropy(values).value
        scaled = marginal_diff_entropy(3.0 * values).value
        self.assertAlmostEqual(scaled - base, math.log(3.0), places=6)

    def test_kde_errors(self):
        with self.assertRaises(InsufficientRowsError):
            marginal_diff_entropy(np.arange(10.0))
        with self.assertRaises(ConstantColumnError):
            marginal_diff_entropy(np.ones(30))

    def test_sample_variance(self):
        self.assertEqual(sample_variance(np.array([1.0, -1.0])), 2.0)
        self.assertEqual(sample_variance(np.zeros(4)), 0.0)
        values = np.random.default_rng(4).standard_normal(10_000)
        self.assertAlmostEqual(sample_variance(values), 1.0, delta=0.05)
        with self.assertRaises(InsufficientRowsError):
            sample_variance(np.array([1.0]))

    def test_gaussian_entropy(self):
        self.assertAlmostEqual(gaussian_entropy(1.0), 1.4189, places=4)
