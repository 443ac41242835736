"""
Unit tests for the copula transform and the statistics functions.
"""

import unittest

import numpy as np
from scipy import stats

from valuation.services.base import ConstantColumnError
from valuation.services.copula import feature_map, feature_moments, to_copula
from valuation.services.models.data_models import (
    CopulaSample,
    FeatureMapKind,
    FeatureMapSpec,
)


class ToCopulaTestCase(unittest.TestCase):
    """Test case for to_copula."""

    def test_rank_over_n_plus_one(self):
        """Test cells are ranks divided by n + 1."""
        sample = to_copula(np.array([3.0, 1.0, 2.0]))
        np.testing.assert_allclose(sample.values[:, 0], [0.75, 0.25, 0.5])

    def test_ties_share_average_rank(self):
        """Test tied values receive the average of their ranks."""
        sample = to_copula(np.array([5.0, 5.0, 1.0]))
        np.testing.assert_allclose(sample.values[:, 0], [0.625, 0.625, 0.25])

    def test_monotone_invariance(self):
        """Test strictly increasing maps leave the sample unchanged."""
        rng = np.random.default_rng(0)
        x = rng.normal(size=(200, 2))
        transformed = np.column_stack([np.exp(x[:, 0]), x[:, 1] ** 3 + 2.0])
        np.testing.assert_array_equal(to_copula(x).values, to_copula(transformed).values)

    def test_interior_grid(self):
        """Test every column is the grid 1/(n+1)..n/(n+1) without boundary cells."""
        rng = np.random.default_rng(1)
        n = 50
        sample = to_copula(rng.random((n, 3)))
        expected = np.arange(1, n + 1) / (n + 1)
        for j in range(3):
            np.testing.assert_allclose(np.sort(sample.values[:, j]), expected)
        self.assertTrue(np.all((sample.values > 0) & (sample.values < 1)))

    def test_constant_column_rejected(self):
        """Test a constant column is rejected with its name."""
        values = np.column_stack([np.arange(5.0), np.ones(5)])
        with self.assertRaises(ConstantColumnError) as context:
            to_copula(values, ["x", "flat"])
        self.assertEqual(context.exception.column, "flat")


class FeatureMomentsTestCase(unittest.TestCase):
    """Test case for feature_map and feature_moments."""

    def test_sizes(self):
        """Test the derived feature counts of each kind."""
        d = 4
        self.assertEqual(FeatureMapSpec(FeatureMapKind.PAIRWISE_PRODUCTS, d).size, 4 + 6)
        self.assertEqual(
            FeatureMapSpec(FeatureMapKind.PAIRWISE_PRODUCTS_PLUS_TAILS, d).size, 4 + 12
        )
        self.assertEqual(FeatureMapSpec(FeatureMapKind.NORMAL_SCORES, d).size, 8 + 12)
        self.assertEqual(FeatureMapSpec(FeatureMapKind.MIXED_SCORES, d).size, 16 + 54)

        u = np.random.default_rng(2).random((10, d))
        for kind in FeatureMapKind:
            spec = FeatureMapSpec(kind, d)
            self.assertEqual(feature_map(u, spec).shape, (10, spec.size))

    def test_independent_uniform_moments(self):
        """Test independent uniforms have moments close to (1/2, 1/2, 1/4)."""
        u = np.random.default_rng(3).random((100_000, 2))
        sample = CopulaSample(values=u, source_columns=("a", "b"))
        moments = feature_moments(sample, FeatureMapSpec(FeatureMapKind.PAIRWISE_PRODUCTS, 2))
        np.testing.assert_allclose(moments, [0.5, 0.5, 0.25], atol=0.01)

    def test_comonotone_pair(self):
        """Test a comonotone pair has product moment close to E[u^2] = 1/3."""
        u = np.random.default_rng(4).random(100_000)
        sample = CopulaSample(values=np.column_stack([u, u]), source_columns=("a", "b"))
        moments = feature_moments(sample, FeatureMapSpec(FeatureMapKind.PAIRWISE_PRODUCTS, 2))
        self.assertAlmostEqual(moments[2], 1.0 / 3.0, delta=0.01)

    def test_matches_row_by_row_mean(self):
        """Test moments equal the brute-force mean of phi over 3 rows."""
        u = np.array([[0.25, 0.5, 0.75], [0.5, 0.75, 0.25], [0.75, 0.25, 0.5]])
        sample = CopulaSample(values=u, source_columns=("a", "b", "c"))
        spec = FeatureMapSpec(FeatureMapKind.PAIRWISE_PRODUCTS_PLUS_TAILS, 3)

        rows = []
        for row in u:
            phi = list(row)
            phi += [row[i] * row[j] for i in range(3) for j in range(i + 1, 3)]
            phi += [(1 - row[i]) * (1 - row[j]) for i in range(3) for j in range(i + 1, 3)]
            rows.append(phi)
        np.testing.assert_allclose(feature_moments(sample, spec), np.mean(rows, axis=0))

    def test_mixed_scores_columns(self):
        """Test the mixed map for one pair against its columns written out."""
        u = np.array([[0.2, 0.7], [0.9, 0.4]])
        z = stats.norm.ppf(u)
        expected = []
        for (u1, u2), (z1, z2) in zip(u, z):
            basis_1, basis_2 = (u1, u1**2, z1), (u2, u2**2, z2)
            row = [u1, u2, u1**2, u2**2, z1, z2, z1**2, z2**2]
            row += [a * b for a in basis_1 for b in basis_2]
            expected.append(row)
        spec = FeatureMapSpec(FeatureMapKind.MIXED_SCORES, 2)
        np.testing.assert_allclose(feature_map(u, spec), expected)

    def test_row_permutation_invariance(self):
        """Test moments do not depend on row order."""
        rng = np.random.default_rng(5)
        u = rng.random((40, 3))
        spec = FeatureMapSpec(FeatureMapKind.NORMAL_SCORES, 3)
        first = feature_moments(CopulaSample(u, ("a", "b", "c")), spec)
        second = feature_moments(CopulaSample(u[rng.permutation(40)], ("a", "b", "c")), spec)
        np.testing.assert_allclose(first, second)

    def test_product_moments_in_unit_interval(self):
        """Test coordinate and product moments lie in (0, 1)."""
        sample = to_copula(np.random.default_rng(6).normal(size=(100, 3)))
        spec = FeatureMapSpec(FeatureMapKind.PAIRWISE_PRODUCTS_PLUS_TAILS, 3)
        moments = feature_moments(sample, spec)
        self.assertTrue(np.all((moments > 0) & (moments < 1)))

    def test_dimension_mismatch(self):
        """Test a feature map of the wrong dimension is rejected."""
        sample = CopulaSample(values=np.full((5, 2), 0.5), source_columns=("a", "b"))
        with self.assertRaises(ValueError):
            feature_moments(sample, FeatureMapSpec(FeatureMapKind.PAIRWISE_PRODUCTS, 3))
