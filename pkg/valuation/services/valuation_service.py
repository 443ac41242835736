"""
Data valuation service.
Turns mutual-information estimates and target statistics into the best
R², RMSE, accuracy and log-likelihood any model could reach, and measures how
far a trained model or a smaller feature set is from them.
"""

import logging
import math
from typing import Dict, Optional, Sequence

import numpy as np
from scipy import stats

from valuation.services.base import InsufficientRowsError
from valuation.services.dataset_service import DatasetService
from valuation.services.entropy import (
    gaussian_entropy,
    hbar_q_inverse,
    marginal_diff_entropy,
    sample_variance,
)
from valuation.services.models.data_models import (
    AchievablePerformance,
    ColumnKind,
    Dataset,
    Diagnostics,
    GeneralizedMetrics,
    IncrementalValue,
    MiEstimate,
    SolverConfig,
)
from valuation.services.mutual_information import estimation_method, mutual_information

logger = logging.getLogger(__name__)

METRICS = ("r2", "rmse", "accuracy", "log_likelihood")

# Metrics where a smaller value is better.
LOWER_IS_BETTER = frozenset({"rmse"})


def _check_mi(mi: float) -> None:
    if not mi >= 0.0:
        raise ValueError(f"Mutual information must be nonnegative, got {mi}")


def best_r2(mi: float) -> float:
    """
    Highest generalized R² achievable with mutual information ``mi``.

    Args:
        mi: Mutual information in nats (>= 0)

    Returns:
        float: 1 - e^(-2 mi)
    """
    _check_mi(mi)
    return 1.0 - math.exp(-2.0 * mi)


def best_rmse(mi: float, variance: float) -> float:
    """
    Lowest generalized RMSE achievable with mutual information ``mi``.

    Args:
        mi: Mutual information in nats (>= 0)
        variance: Target variance (>= 0)

    Returns:
        float: sqrt(variance * e^(-2 mi))
    """
    _check_mi(mi)
    if variance < 0:
        raise ValueError(f"Variance must be nonnegative, got {variance}")
    return math.sqrt(variance * math.exp(-2.0 * mi))


def _frequencies(class_frequencies: Sequence[float]) -> np.ndarray:
    frequencies = np.asarray(class_frequencies, dtype=np.float64)
    if frequencies.size < 2:
        raise ValueError(f"Classification needs q >= 2 classes, got {frequencies.size}")
    if np.any(frequencies < 0) or abs(frequencies.sum() - 1.0) > 1e-9:
        raise ValueError("Class frequencies must be a probability vector")
    return frequencies


def best_accuracy(mi: float, class_frequencies: Sequence[float]) -> float:
    """
    Highest classification accuracy achievable with mutual information ``mi``.

    Inverts the flat-tail entropy at the conditional entropy H(y) - mi, and
    never reports less than predicting the most frequent class.

    Args:
        mi: Mutual information in nats (>= 0)
        class_frequencies: Marginal class probabilities (length q >= 2)

    Returns:
        float: Best accuracy in [max p_i, 1]
    """
    _check_mi(mi)
    frequencies = _frequencies(class_frequencies)
    q = frequencies.size
    conditional = float(stats.entropy(frequencies)) - mi
    accuracy = hbar_q_inverse(conditional, q, clamp=True)
    return max(accuracy, float(frequencies.max()))


def best_log_likelihood(mi: float, target_entropy: float) -> float:
    """Highest expected log-likelihood per observation, -h(y) + mi."""
    _check_mi(mi)
    return -target_entropy + mi


def diagnostics_bounds(
    mi: float,
    target_entropy: float,
    variance: Optional[float] = None,
    q: Optional[int] = None,
) -> Diagnostics:
    """
    Companion bounds reported next to the best metrics.

    Args:
        mi: Mutual information in nats
        target_entropy: H(y) for classification, differential h(y) otherwise
        variance: Target variance (regression)
        q: Number of classes (classification)

    Returns:
        Diagnostics: Hellman-Raviv accuracy lower bound (classification) and
        Brillinger MSE lower bound (regression)
    """
    hellman_raviv = None
    brillinger = None
    if q is not None:
        hellman_raviv = 1.0 - (target_entropy - mi) / (2.0 * math.log(2.0))
        hellman_raviv = min(max(hellman_raviv, 0.0), 1.0)
    if variance is not None:
        # A density never beats the Gaussian entropy of its variance
        entropy = min(target_entropy, gaussian_entropy(variance)) if variance > 0 else target_entropy
        brillinger = math.exp(2.0 * entropy) / (2.0 * math.pi * math.e) * math.exp(-2.0 * mi)
    return Diagnostics(hellman_raviv_lower=hellman_raviv, brillinger_mse_lower=brillinger)


def suboptimality_gap(
    model_perf: float, achievable: AchievablePerformance, metric: str
) -> float:
    """
    Headroom between a trained model and the achievable best.

    Positive values mean the model can still improve; negative values are
    evidence of overfitting (the model looks better than possible).

    Args:
        model_perf: The model's value of the metric
        achievable: Achievable performance of the same feature set
        metric: One of r2, rmse, accuracy, log_likelihood

    Returns:
        float: Best minus model (model minus best for RMSE)

    Raises:
        ValueError: If the metric is unknown or absent from ``achievable``
    """
    if metric not in METRICS:
        raise ValueError(f"Unknown metric '{metric}'")
    best = achievable.metric(metric)
    if best is None:
        raise ValueError(f"Metric '{metric}' is not available for this target")
    if metric in LOWER_IS_BETTER:
        return model_perf - best
    return best - model_perf


def is_likely_overfit(gap: float, threshold: float = 0.0) -> bool:
    """Whether a suboptimality gap is negative beyond ``threshold``."""
    return gap < -threshold


class ValuationService:
    """Service valuing datasets, feature sets and trained models."""

    def __init__(self, cfg: Optional[SolverConfig] = None):
        self.cfg = cfg or SolverConfig.from_settings()
        self.dataset_service = DatasetService()

    def value(self, dataset: Dataset, features: Sequence[str]) -> AchievablePerformance:
        """
        Achievable performance of predicting the target from ``features``.

        An empty feature list values the target alone (mi = 0).

        Args:
            dataset: Dataset holding target and features
            features: Feature names

        Returns:
            AchievablePerformance: Best metrics and diagnostics
        """
        if features:
            mi = mutual_information(dataset, features, self.cfg)
        else:
            mi = MiEstimate(value=0.0, method=estimation_method(self.cfg))
        ordered = tuple(name for name in dataset.feature_names if name in set(features))
        return self.from_mi(dataset, mi, ordered)

    def from_mi(
        self, dataset: Dataset, mi: MiEstimate, features: Sequence[str] = ()
    ) -> AchievablePerformance:
        """
        Convert a mutual-information estimate into achievable metrics.

        Args:
            dataset: Dataset whose target the estimate refers to
            mi: Mutual-information estimate
            features: Feature names, for the report

        Returns:
            AchievablePerformance: Best metrics and diagnostics
        """
        y = dataset.column(dataset.target)
        schema = dataset.target_schema
        if schema.is_categorical:
            q = max(dataset.cardinality(dataset.target), schema.declared_cardinality or 0)
            frequencies = np.bincount(y, minlength=q) / len(y)
            if q < 2:
                frequencies = np.array([1.0, 0.0])
                q = 2
            entropy = float(stats.entropy(frequencies))
            return AchievablePerformance(
                mi=mi,
                best_r2=best_r2(mi.value),
                best_log_likelihood=best_log_likelihood(mi.value, entropy),
                best_accuracy=best_accuracy(mi.value, frequencies),
                diagnostics=diagnostics_bounds(mi.value, entropy, q=q),
                features=tuple(features),
                q=q,
            )

        variance = sample_variance(y)
        try:
            entropy = marginal_diff_entropy(y, dataset.target).value
        except InsufficientRowsError:
            logger.warning(
                f"Too few rows for a kernel entropy of '{dataset.target}'; "
                "using the Gaussian entropy of its variance"
            )
            entropy = gaussian_entropy(variance)
        return AchievablePerformance(
            mi=mi,
            best_r2=best_r2(mi.value),
            best_log_likelihood=best_log_likelihood(mi.value, entropy),
            best_rmse=best_rmse(mi.value, variance),
            diagnostics=diagnostics_bounds(mi.value, entropy, variance=variance),
            features=tuple(features),
        )

    def incremental_value(
        self,
        dataset: Dataset,
        old_features: Sequence[str],
        new_features: Sequence[str],
    ) -> IncrementalValue:
        """
        Value of adding ``new_features`` to ``old_features``.

        Args:
            dataset: Dataset holding every feature
            old_features: Features already in use
            new_features: Candidate additions (duplicates of old ones are ignored)

        Returns:
            IncrementalValue: Both valuations and the per-metric boost
        """
        combined_features = list(dict.fromkeys([*old_features, *new_features]))
        old = self.value(dataset, list(old_features))
        combined = self.value(dataset, combined_features)

        boost: Dict[str, float] = {"mi": max(combined.mi.value - old.mi.value, 0.0)}
        for metric in METRICS:
            before, after = old.metric(metric), combined.metric(metric)
            if before is None or after is None:
                continue
            change = before - after if metric in LOWER_IS_BETTER else after - before
            boost[metric] = max(change, 0.0)
        logger.info(f"Adding {list(new_features)} boosts mi by {boost['mi']:.4f} nats")
        return IncrementalValue(old=old, combined=combined, boost=boost)

    def one_vs_rest_accuracy(
        self, dataset: Dataset, features: Sequence[str], class_index: int
    ) -> float:
        """
        Best accuracy of telling class ``class_index`` apart from all others.

        Args:
            dataset: Dataset with a categorical target of q > 2 classes
            features: Feature names
            class_index: Code of the class to single out

        Returns:
            float: Best accuracy of the binary problem

        Raises:
            ValueError: If the target is not categorical with q > 2, or the
                class index is out of range
        """
        schema = dataset.target_schema
        if not schema.is_categorical:
            raise ValueError("One-vs-rest accuracy needs a categorical target")
        q = dataset.cardinality(dataset.target)
        if q <= 2:
            raise ValueError("One-vs-rest accuracy needs more than 2 classes")
        if not 0 <= class_index < q:
            raise ValueError(f"Class index {class_index} is outside 0..{q - 1}")

        label = dataset.decode(dataset.target, [class_index])[0]
        binary = self.dataset_service.retarget(
            dataset,
            f"{dataset.target}=={label}",
            dataset.column(dataset.target) == class_index,
            kind=ColumnKind.CATEGORICAL,
        )
        performance = self.value(binary, list(features))
        return performance.best_accuracy

    def model_generalized_metrics(
        self,
        y: Sequence,
        z: Sequence,
        categorical: bool = False,
    ) -> GeneralizedMetrics:
        """
        Generalized R² and MSE of a model from its predictions.

        Args:
            y: Observed target values
            z: Model predictions aligned with ``y``
            categorical: Whether y and z are class labels (R² only)

        Returns:
            GeneralizedMetrics: 1 - e^(-2 I(y;z)) and, for continuous targets,
            Var(y) e^(-2 I(y;z)) + (mean(y - z))^2

        Raises:
            ValueError: If lengths differ
        """
        if len(y) != len(z):
            raise ValueError(f"y has {len(y)} values, predictions have {len(z)}")
        kinds = ["prediction", "y"] if categorical else []
        dataset = self.dataset_service.from_arrays(
            {"prediction": z, "y": y}, target="y", categorical=kinds
        )
        mi = mutual_information(dataset, ["prediction"], self.cfg)
        r2 = best_r2(mi.value)
        if categorical:
            return GeneralizedMetrics(mi=mi, generalized_r2=r2)

        y_values = np.asarray(y, dtype=np.float64)
        bias = float(np.mean(y_values - np.asarray(z, dtype=np.float64)))
        mse = sample_variance(y_values) * math.exp(-2.0 * mi.value) + bias**2
        return GeneralizedMetrics(mi=mi, generalized_r2=r2, generalized_mse=mse)
