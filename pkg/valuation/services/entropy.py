"""
One-dimensional entropy estimators and the flat-tail entropy function used to
turn conditional entropies into achievable classification accuracies.
"""

import logging
import math

import numpy as np
from scipy import optimize, stats
from scipy.special import xlogy

from valuation.services.base import ConstantColumnError, InsufficientRowsError
from valuation.services.models.data_models import EntropyEstimate, EntropyKind

logger = logging.getLogger(__name__)

# Absolute slack when checking entropies against log q.
RANGE_SLACK = 1e-12

MIN_KDE_ROWS = 20


def _check_q(q: int) -> None:
    if int(q) != q or q < 2:
        raise ValueError(f"q must be an integer >= 2, got {q}")


def hbar_q(a: float, q: int) -> float:
    """
    Entropy of the q-outcome distribution with top probability a and a flat tail.

    Args:
        a: Top probability, in [1/q, 1]
        q: Number of outcomes (>= 2)

    Returns:
        float: Entropy in nats, with 0 log 0 = 0

    Raises:
        ValueError: If q < 2 or a lies outside [1/q, 1]
    """
    _check_q(q)
    if not (1.0 / q - RANGE_SLACK <= a <= 1.0 + RANGE_SLACK):
        raise ValueError(f"a={a} is outside [1/{q}, 1]")
    a = min(max(a, 1.0 / q), 1.0)
    rest = 1.0 - a
    return float(-xlogy(a, a) - xlogy(rest, rest / (q - 1)))


def hbar_q_inverse(h: float, q: int, clamp: bool = False) -> float:
    """
    Invert hbar_q on its decreasing branch [1/q, 1].

    Args:
        h: Entropy in nats, in [0, log q]
        q: Number of outcomes (>= 2)
        clamp: Clamp h into [0, log q] instead of raising

    Returns:
        float: The unique a in [1/q, 1] with |hbar_q(a) - h| <= 1e-10

    Raises:
        ValueError: If h is out of range and clamp is False
    """
    _check_q(q)
    log_q = math.log(q)
    if clamp:
        h = min(max(h, 0.0), log_q)
    elif not (-RANGE_SLACK <= h <= log_q + RANGE_SLACK):
        raise ValueError(f"h={h} is outside [0, log {q}]")

    if h <= 0.0:
        return 1.0
    # hbar_q is flat at 1/q, so rounding noise there is not bisected
    if h >= log_q - RANGE_SLACK:
        return 1.0 / q

    return float(
        optimize.bisect(
            lambda a: hbar_q(a, q) - h,
            1.0 / q,
            1.0,
            xtol=1e-15,
            maxiter=200,
        )
    )


def shannon_entropy(codes: np.ndarray) -> EntropyEstimate:
    """
    Plug-in Shannon entropy of a categorical column.

    Args:
        codes: Dense nonnegative integer codes

    Returns:
        EntropyEstimate: Entropy in nats

    Raises:
        InsufficientRowsError: If the column is empty
    """
    codes = np.asarray(codes)
    if codes.size == 0:
        raise InsufficientRowsError("Cannot take the entropy of an empty column")
    counts = np.bincount(codes.astype(np.int64))
    counts = counts[counts > 0]
    return EntropyEstimate(
        value=float(stats.entropy(counts)),
        kind=EntropyKind.SHANNON,
        n_used=int(codes.size),
    )


def joint_codes(*columns: np.ndarray) -> np.ndarray:
    """Dense codes of the joint categories of several categorical columns."""
    stacked = np.column_stack([np.asarray(c, dtype=np.int64) for c in columns])
    _, inverse = np.unique(stacked, axis=0, return_inverse=True)
    return inverse.reshape(-1)


def silverman_bandwidth(values: np.ndarray) -> float:
    """Silverman's rule of thumb 1.06 * sd * n^(-1/5)."""
    return 1.06 * float(np.std(values, ddof=1)) * len(values) ** (-0.2)


def marginal_diff_entropy(values: np.ndarray, name: str = "column") -> EntropyEstimate:
    """
    Resubstitution estimate of the differential entropy of a continuous column.

    Uses a Gaussian kernel density with Silverman's bandwidth and returns
    -(1/n) sum log f(x_i).

    Args:
        values: Continuous column
        name: Column name for error messages

    Returns:
        EntropyEstimate: Entropy in nats, with the bandwidth used

    Raises:
        InsufficientRowsError: If fewer than 20 rows are given
        ConstantColumnError: If the column is constant
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size < MIN_KDE_ROWS:
        raise InsufficientRowsError(
            f"Kernel entropy of '{name}' needs {MIN_KDE_ROWS} rows, got {values.size}"
        )
    if np.ptp(values) == 0.0:
        raise ConstantColumnError(name, source="marginal_diff_entropy")

    n = values.size
    kde = stats.gaussian_kde(values, bw_method=1.06 * n ** (-0.2))
    value = -float(np.mean(kde.logpdf(values)))
    return EntropyEstimate(
        value=value,
        kind=EntropyKind.DIFFERENTIAL,
        n_used=n,
        bandwidth=silverman_bandwidth(values),
    )


def sample_variance(values: np.ndarray) -> float:
    """
    Unbiased sample variance.

    Raises:
        InsufficientRowsError: If fewer than 2 values are given
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        raise InsufficientRowsError("Sample variance needs at least 2 values")
    return float(np.var(values, ddof=1))


def gaussian_entropy(variance: float) -> float:
    """Differential entropy of a Gaussian with the given variance."""
    return 0.5 * math.log(2.0 * math.pi * math.e * variance)
