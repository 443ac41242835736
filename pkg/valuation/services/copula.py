"""
Probability integral transform into the copula-uniform space, and the
statistics functions whose empirical moments feed the max-entropy solver.
"""

import logging
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtri
from scipy.stats import rankdata

from valuation.services.base import ConstantColumnError
from valuation.services.models.data_models import (
    CopulaSample,
    FeatureMapKind,
    FeatureMapSpec,
)

logger = logging.getLogger(__name__)


def to_copula(
    values: np.ndarray, names: Optional[Sequence[str]] = None
) -> CopulaSample:
    """
    Rank-transform each column into (0, 1).

    Cell (i, j) is the rank of row i within column j divided by n + 1; ties
    share the average of their ranks.

    Args:
        values: n x d matrix (a 1-d array is treated as one column)
        names: Column names, used in error messages

    Returns:
        CopulaSample: The copula-uniform sample

    Raises:
        ConstantColumnError: If a column has zero variance
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    names = tuple(names) if names is not None else tuple(
        f"c{j}" for j in range(values.shape[1])
    )

    spread = np.ptp(values, axis=0) if values.shape[0] else np.zeros(values.shape[1])
    for j, width in enumerate(spread):
        if width == 0.0:
            raise ConstantColumnError(names[j], source="to_copula")

    n = values.shape[0]
    ranks = rankdata(values, method="average", axis=0)
    return CopulaSample(values=ranks / (n + 1.0), source_columns=names)


def pair_indices(d: int) -> tuple[np.ndarray, np.ndarray]:
    """Row/column indices of the pairs i < j, in lexicographic order."""
    return np.triu_indices(d, k=1)


def feature_map(u: np.ndarray, spec: FeatureMapSpec) -> np.ndarray:
    """
    Evaluate the statistics function on every row of a copula-uniform matrix.

    With z = Phi^-1(u), the columns are, in order:

        pairwise_products             u_i; u_i u_j (i < j)
        pairwise_products_plus_tails  u_i; u_i u_j; (1 - u_i)(1 - u_j)
        normal_scores                 u_i; u_i u_j; z_i^2; z_i z_j
        mixed_scores                  u_i; u_i^2; z_i; z_i^2; then a_i b_j for
                                      every (a, b) in {u, u^2, z} x {u, u^2, z}

    Args:
        u: n x d matrix with cells in (0, 1)
        spec: Feature map specification

    Returns:
        np.ndarray: n x m matrix of features

    Raises:
        ValueError: If spec.dimension does not match the width of u
    """
    if u.ndim != 2 or u.shape[1] != spec.dimension:
        raise ValueError(
            f"Feature map expects {spec.dimension} columns, got {u.shape[-1]}"
        )
    rows, cols = pair_indices(spec.dimension)
    if spec.kind == FeatureMapKind.MIXED_SCORES:
        z = ndtri(u)
        squared = u * u
        blocks = [u, squared, z, z * z]
        basis = (u, squared, z)
        blocks += [a[:, rows] * b[:, cols] for a in basis for b in basis]
        return np.hstack(blocks)

    blocks = [u, u[:, rows] * u[:, cols]]
    if spec.kind == FeatureMapKind.PAIRWISE_PRODUCTS_PLUS_TAILS:
        v = 1.0 - u
        blocks.append(v[:, rows] * v[:, cols])
    elif spec.kind == FeatureMapKind.NORMAL_SCORES:
        z = ndtri(u)
        blocks.append(z * z)
        blocks.append(z[:, rows] * z[:, cols])
    return np.hstack(blocks)


def feature_moments(sample: CopulaSample, spec: FeatureMapSpec) -> np.ndarray:
    """
    Empirical mean of the statistics function over the rows of a sample.

    Args:
        sample: Copula-uniform sample
        spec: Feature map specification

    Returns:
        np.ndarray: Moment vector of length spec.size

    Raises:
        ValueError: If spec.dimension does not match the sample width
    """
    if spec.dimension != sample.width:
        raise ValueError(
            f"Feature map dimension {spec.dimension} != sample width {sample.width}"
        )
    return feature_map(sample.values, spec).mean(axis=0)
