"""
Mutual information between the target and a set of explanatory columns.

Dispatches on column types:

    y continuous, x continuous   I = h(u_x) - h(u_y, u_x)
    y categorical, x continuous  I = h(x) - sum_i P(i) h(x | y = i)
    y continuous, x categorical  I = h(y) - sum_i P(i) h(y | x = i)
    y categorical, x categorical I = H(y) + H(x) - H(y, x)

Mixed explanatory sets are split as I(y; x_d) + sum_i P(i) I(y; x_c | x_d = i)
when the categorical part has few enough joint categories, and fall back to
frequency-ordinal encoding otherwise. Multivariate differential entropies are
decomposed into a copula entropy plus marginal entropies, the latter taken on
copula-uniform scores so that the estimate only depends on ranks.
"""

import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from valuation.services.base import (
    CopulaEntropyEstimator,
    InsufficientDataError,
    SchemaError,
)
from valuation.services.caching.decorators import cached_estimate
from valuation.services.copula import to_copula
from valuation.services.entropy import (
    joint_codes,
    marginal_diff_entropy,
    shannon_entropy,
)
from valuation.services.estimators.gaussian import GaussianCopulaEstimator
from valuation.services.estimators.mind import MindCopulaEstimator
from valuation.services.models.data_models import (
    Dataset,
    EstimationMethod,
    MiEstimate,
    SolverConfig,
)

logger = logging.getLogger(__name__)

GAUSSIAN_METHODS = frozenset({"gaussian", "gaussian_copula"})

Components = Dict[str, float]


def estimation_method(cfg: SolverConfig) -> EstimationMethod:
    """Estimation method named by a solver config."""
    if cfg.method in GAUSSIAN_METHODS:
        return EstimationMethod.GAUSSIAN_COPULA
    return EstimationMethod.MIND_DUAL


def frequency_ordinal(codes: np.ndarray) -> np.ndarray:
    """
    Re-code a categorical column by decreasing category frequency.

    The most frequent category becomes 0.0, the next 1.0 and so on; equal
    counts keep first-appearance order.
    """
    counts = np.bincount(codes)
    order = np.argsort(-counts, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    return rank[codes].astype(np.float64)


def pool_blocks(codes: np.ndarray, min_rows: int, label: str = "block") -> np.ndarray:
    """
    Merge conditioning blocks smaller than ``min_rows`` into one "other" block.

    When the pooled block is itself too small it is folded into the smallest
    adequate block.

    Args:
        codes: Nonnegative block codes
        min_rows: Minimum rows per block
        label: Name used in log messages

    Returns:
        np.ndarray: Dense block codes 0..k-1

    Raises:
        InsufficientDataError: If no block, pooled or not, reaches min_rows
    """
    counts = np.bincount(codes)
    present = np.flatnonzero(counts)
    small = [int(c) for c in present if counts[c] < min_rows]
    mapping = np.arange(len(counts))

    if small:
        adequate = [int(c) for c in present if counts[c] >= min_rows]
        pooled_rows = int(counts[small].sum())
        if pooled_rows >= min_rows:
            mapping[small] = small[0]
        elif adequate:
            mapping[small] = min(adequate, key=lambda c: (counts[c], c))
        else:
            raise InsufficientDataError(
                f"No {label} reaches {min_rows} rows (largest has {counts.max()})",
                source="mutual_information",
            )
        logger.warning(
            f"Pooled {len(small)} small {label}(s) holding {pooled_rows} rows"
        )

    _, dense = np.unique(mapping[codes], return_inverse=True)
    return dense.reshape(-1)


def _blocks(codes: np.ndarray) -> List[Tuple[float, np.ndarray]]:
    n = len(codes)
    return [
        (float(rows.sum()) / n, rows)
        for rows in (codes == b for b in range(int(codes.max()) + 1))
    ]


class MutualInformationService:
    """Service estimating mutual information for one solver configuration."""

    def __init__(self, cfg: Optional[SolverConfig] = None):
        self.cfg = cfg or SolverConfig.from_settings()

    def _estimator(self) -> CopulaEntropyEstimator:
        if estimation_method(self.cfg) == EstimationMethod.GAUSSIAN_COPULA:
            return GaussianCopulaEstimator()
        return MindCopulaEstimator(self.cfg)

    def estimate(self, dataset: Dataset, features: Sequence[str]) -> MiEstimate:
        """
        Estimate I(y; x) for the target and the named features.

        Args:
            dataset: Dataset holding the target and features
            features: Nonempty list of feature names

        Returns:
            MiEstimate: Nonnegative estimate in nats with its components

        Raises:
            ValueError: If the feature list is empty
            SchemaError: If a name is unknown or is the target
            InsufficientDataError: If conditional blocks stay too small
        """
        if not features:
            raise ValueError("Mutual information needs at least one feature")
        for name in features:
            if name == dataset.target:
                raise SchemaError(f"'{name}' is the target", source="mutual_information")
            if name not in dataset.names:
                raise SchemaError(f"Unknown column '{name}'", source="mutual_information")

        y = dataset.column(dataset.target)
        y_categorical = dataset.target_schema.is_categorical
        if y_categorical and len(np.unique(y)) < 2:
            logger.warning(f"Target '{dataset.target}' has a single class")
            return MiEstimate(value=0.0, method=estimation_method(self.cfg))

        discrete = [f for f in features if dataset.schema(f).is_categorical]
        continuous = [f for f in features if not dataset.schema(f).is_categorical]
        x_disc = joint_codes(*(dataset.column(f) for f in discrete)) if discrete else None

        if x_disc is not None and (continuous or not y_categorical):
            blocks = int(x_disc.max()) + 1
            if blocks > self.cfg.max_blocks:
                logger.warning(
                    f"{blocks} joint categories of {discrete} exceed max_blocks="
                    f"{self.cfg.max_blocks}; using frequency-ordinal encoding"
                )
                continuous = list(features)
                x_disc = None

        x_cont = None
        if continuous:
            x_cont = np.column_stack(
                [
                    frequency_ordinal(dataset.column(f))
                    if dataset.schema(f).is_categorical
                    else dataset.column(f)
                    for f in continuous
                ]
            )

        estimator = self._estimator()
        value, components = self._dispatch(
            y, y_categorical, dataset.target, x_cont, continuous, x_disc, estimator
        )

        value = max(value, 0.0)
        if y_categorical:
            value = min(value, shannon_entropy(y).value)
        logger.debug(f"I({dataset.target}; {list(features)}) = {value:.6f} nats")
        return MiEstimate(
            value=value,
            method=estimation_method(self.cfg),
            components=components,
            degenerate=bool(getattr(estimator, "degenerate", False)),
        )

    def _dispatch(
        self,
        y: np.ndarray,
        y_categorical: bool,
        target: str,
        x_cont: Optional[np.ndarray],
        names: Sequence[str],
        x_disc: Optional[np.ndarray],
        estimator: CopulaEntropyEstimator,
    ) -> Tuple[float, Components]:
        if x_disc is None:
            if y_categorical:
                return self._categorical_continuous(y, x_cont, names, estimator)
            return self._continuous_continuous(y, target, x_cont, names, estimator)
        if x_cont is None:
            if y_categorical:
                return self._categorical_categorical(y, x_disc)
            return self._continuous_categorical(y, target, x_disc)

        # Mixed: chain rule over the categorical part
        if y_categorical:
            discrete_value, _ = self._categorical_categorical(y, x_disc)
        else:
            discrete_value, _ = self._continuous_categorical(y, target, x_disc)

        conditional = 0.0
        for weight, rows in _blocks(pool_blocks(x_disc, self.cfg.min_block_rows)):
            y_block = y[rows]
            # Columns constant inside the block add nothing to it
            varying = np.ptp(x_cont[rows], axis=0) > 0.0
            if not varying.any():
                continue
            x_block = x_cont[rows][:, varying]
            block_names = [name for name, keep in zip(names, varying) if keep]
            if y_categorical:
                if len(np.unique(y_block)) < 2:
                    continue
                _, y_block = np.unique(y_block, return_inverse=True)
                value, _ = self._categorical_continuous(
                    y_block.reshape(-1), x_block, block_names, estimator
                )
            else:
                if np.ptp(y_block) == 0.0:
                    continue
                value, _ = self._continuous_continuous(
                    y_block, target, x_block, block_names, estimator
                )
            conditional += weight * value

        return discrete_value + conditional, {
            "discrete": discrete_value,
            "continuous_given_discrete": conditional,
        }

    def _continuous_continuous(
        self,
        y: np.ndarray,
        target: str,
        x: np.ndarray,
        names: Sequence[str],
        estimator: CopulaEntropyEstimator,
    ) -> Tuple[float, Components]:
        sample = to_copula(np.column_stack([y, x]), [target, *names])
        copula_x = estimator.copula_entropy(sample.values[:, 1:]) if x.shape[1] > 1 else 0.0
        copula_yx = estimator.copula_entropy(sample.values)
        return copula_x - copula_yx, {"copula_x": copula_x, "copula_yx": copula_yx}

    def _categorical_continuous(
        self,
        y: np.ndarray,
        x: np.ndarray,
        names: Sequence[str],
        estimator: CopulaEntropyEstimator,
    ) -> Tuple[float, Components]:
        u = to_copula(x, names).values
        width = u.shape[1]
        blocks = _blocks(pool_blocks(y, self.cfg.min_block_rows, label="class"))

        copula_x = estimator.copula_entropy(u) if width > 1 else 0.0
        copula_given_y = 0.0
        if width > 1:
            for weight, rows in blocks:
                block = to_copula(x[rows], names).values
                copula_given_y += weight * estimator.copula_entropy(block)

        marginal_gain = 0.0
        for j, name in enumerate(names):
            marginal = marginal_diff_entropy(u[:, j], name).value
            conditional = sum(
                weight * marginal_diff_entropy(u[rows, j], name).value
                for weight, rows in blocks
            )
            marginal_gain += marginal - conditional

        return copula_x - copula_given_y + marginal_gain, {
            "copula_x": copula_x,
            "copula_x_given_y": copula_given_y,
            "marginal_gain": marginal_gain,
        }

    def _continuous_categorical(
        self, y: np.ndarray, target: str, x_codes: np.ndarray
    ) -> Tuple[float, Components]:
        u = to_copula(y, [target]).values[:, 0]
        marginal = marginal_diff_entropy(u, target).value
        conditional = sum(
            weight * marginal_diff_entropy(u[rows], target).value
            for weight, rows in _blocks(pool_blocks(x_codes, self.cfg.min_block_rows))
        )
        return marginal - conditional, {
            "marginal_y": marginal,
            "marginal_y_given_x": conditional,
        }

    def _categorical_categorical(
        self, y: np.ndarray, x_codes: np.ndarray
    ) -> Tuple[float, Components]:
        h_y = shannon_entropy(y).value
        h_x = shannon_entropy(x_codes).value
        h_yx = shannon_entropy(joint_codes(y, x_codes)).value
        return h_y + h_x - h_yx, {"entropy_y": h_y, "entropy_x": h_x, "entropy_yx": h_yx}


@cached_estimate(key_prefix="mi")
def _cached_mutual_information(
    dataset: Dataset, features: Tuple[str, ...], cfg: SolverConfig
) -> MiEstimate:
    return MutualInformationService(cfg).estimate(dataset, features)


def mutual_information(
    dataset: Dataset, features: Sequence[str], cfg: Optional[SolverConfig] = None
) -> MiEstimate:
    """
    Estimate I(y; x) for the dataset target and a feature set.

    Features are deduplicated and put in schema order first, so any ordering
    of the same set gives the same (cached) estimate.

    Args:
        dataset: Dataset holding the target and features
        features: Nonempty list of feature names
        cfg: Solver settings (defaults from Django settings)

    Returns:
        MiEstimate: Nonnegative estimate in nats

    Raises:
        ValueError: If the feature list is empty
        SchemaError: If a name is unknown or is the target
        EstimationError: If the estimator fails
    """
    wanted = set(features)
    if not wanted:
        raise ValueError("Mutual information needs at least one feature")
    unknown = sorted(wanted - set(dataset.feature_names))
    if unknown:
        raise SchemaError(f"Unknown feature columns: {unknown}", source="mutual_information")
    ordered = tuple(name for name in dataset.feature_names if name in wanted)
    return _cached_mutual_information(dataset, ordered, cfg or SolverConfig.from_settings())
