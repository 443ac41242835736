"""
Data models for the valuation service layer.
Contains the immutable value objects passed between ingestion, estimation,
valuation, selection and monitoring services.
"""

import hashlib
import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np


class ColumnKind(str, Enum):
    """Statistical type of a column."""

    CONTINUOUS = "continuous"
    CATEGORICAL = "categorical"


class FeatureMapKind(str, Enum):
    """Families of statistics functions used by the max-entropy copula solver."""

    PAIRWISE_PRODUCTS = "pairwise_products"
    PAIRWISE_PRODUCTS_PLUS_TAILS = "pairwise_products_plus_tails"
    NORMAL_SCORES = "normal_scores"
    MIXED_SCORES = "mixed_scores"


class EntropyKind(str, Enum):
    SHANNON = "shannon"
    DIFFERENTIAL = "differential"


class EstimationMethod(str, Enum):
    MIND_DUAL = "mind_dual"
    GAUSSIAN_COPULA = "gaussian_copula"


class MetricDirection(str, Enum):
    HIGHER_IS_BETTER = "higher_is_better"
    LOWER_IS_BETTER = "lower_is_better"


class StopReason(str, Enum):
    CAPACITY = "capacity"
    FRACTION_REACHED = "fraction_reached"
    EXHAUSTED = "exhausted"


@dataclass(frozen=True)
class ColumnSchema:
    """
    Name and statistical type of one dataset column.
    """

    name: str
    kind: ColumnKind
    declared_cardinality: Optional[int] = None

    def __post_init__(self):
        if self.declared_cardinality is not None:
            if self.kind != ColumnKind.CATEGORICAL:
                raise ValueError(
                    f"declared_cardinality only applies to categorical column '{self.name}'"
                )
            if self.declared_cardinality < 2:
                raise ValueError(
                    f"declared_cardinality of '{self.name}' must be at least 2"
                )

    @property
    def is_categorical(self) -> bool:
        return self.kind == ColumnKind.CATEGORICAL


@dataclass(frozen=True)
class IngestConfig:
    """
    Typing and row-limit overrides applied when a CSV file is loaded.
    """

    target: Optional[str] = None
    categorical: Tuple[str, ...] = ()
    continuous: Tuple[str, ...] = ()
    max_rows: Optional[int] = None


@dataclass(frozen=True)
class SolverConfig:
    """
    Settings of the mutual-information estimators.
    """

    quadrature_points: int = 2**14
    max_iters: int = 500
    grad_tol: float = 1e-6
    min_entropy: float = -8.0
    max_blocks: int = 32
    min_block_rows: int = 50
    method: str = "mind"
    feature_map: FeatureMapKind = FeatureMapKind.MIXED_SCORES
    seed: int = 0

    @classmethod
    def from_settings(cls, **overrides: Any) -> "SolverConfig":
        """
        Build a solver config from Django settings, applying explicit overrides.

        Args:
            **overrides: Field values taking precedence over settings

        Returns:
            SolverConfig: A new instance
        """
        from django.conf import settings

        values = {
            "quadrature_points": getattr(settings, "LEANVIZ_QUADRATURE_POINTS", 2**14),
            "max_iters": getattr(settings, "LEANVIZ_MAX_ITERS", 500),
            "grad_tol": getattr(settings, "LEANVIZ_GRAD_TOL", 1e-6),
            "min_entropy": getattr(settings, "LEANVIZ_MIN_ENTROPY", -8.0),
            "max_blocks": getattr(settings, "LEANVIZ_MAX_BLOCKS", 32),
            "min_block_rows": getattr(settings, "LEANVIZ_MIN_BLOCK_ROWS", 50),
            "method": getattr(settings, "LEANVIZ_METHOD", "mind"),
            "feature_map": FeatureMapKind(
                getattr(settings, "LEANVIZ_FEATURE_MAP", "mixed_scores")
            ),
            "seed": getattr(settings, "LEANVIZ_SEED", 0),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def with_overrides(self, **overrides: Any) -> "SolverConfig":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["feature_map"] = self.feature_map.value
        return data


@dataclass(frozen=True)
class SelectConfig:
    """
    Stopping rules of the greedy variable selection.
    """

    capacity: Optional[int] = None
    fraction: float = 0.95

    def __post_init__(self):
        if self.capacity is not None and self.capacity < 1:
            raise ValueError("capacity must be at least 1")
        if not 0.0 < self.fraction <= 1.0:
            raise ValueError("fraction must lie in (0, 1]")


@dataclass(frozen=True)
class Dataset:
    """
    Typed, immutable column store with a designated target.

    Continuous columns are float64 arrays, categorical columns are dense
    int64 codes whose original labels are kept in ``labels``.
    """

    schemas: Tuple[ColumnSchema, ...]
    columns: Dict[str, np.ndarray]
    target: str
    labels: Dict[str, Tuple[str, ...]] = field(default_factory=dict)
    dropped_rows: int = 0

    def __post_init__(self):
        # Frozen copies; the caller's arrays stay writable
        columns = {}
        for name, values in self.columns.items():
            values = np.array(values)
            values.flags.writeable = False
            columns[name] = values
        object.__setattr__(self, "columns", columns)

        names = [s.name for s in self.schemas]
        if len(set(names)) != len(names):
            raise ValueError("Column names must be unique")
        if self.target not in names:
            raise ValueError(f"Target '{self.target}' is not a column")
        lengths = {len(self.columns[name]) for name in names}
        if len(lengths) != 1:
            raise ValueError("All columns must have the same length")
        if self.n < 2:
            raise ValueError("A dataset needs at least 2 rows")
        for schema in self.schemas:
            values = self.columns[schema.name]
            if schema.is_categorical:
                if values.size and values.min() < 0:
                    raise ValueError(f"Negative code in column '{schema.name}'")
            elif not np.all(np.isfinite(values)):
                raise ValueError(f"Non-finite value in column '{schema.name}'")

    @property
    def n(self) -> int:
        return len(self.columns[self.schemas[0].name])

    @property
    def names(self) -> List[str]:
        return [s.name for s in self.schemas]

    @property
    def feature_names(self) -> List[str]:
        return [s.name for s in self.schemas if s.name != self.target]

    @property
    def target_schema(self) -> ColumnSchema:
        return self.schema(self.target)

    def schema(self, name: str) -> ColumnSchema:
        for schema in self.schemas:
            if schema.name == name:
                return schema
        raise KeyError(name)

    def column(self, name: str) -> np.ndarray:
        return self.columns[name]

    def cardinality(self, name: str) -> int:
        """Observed number of categories of a categorical column."""
        values = self.columns[name]
        return int(values.max()) + 1 if values.size else 0

    def decode(self, name: str, codes: np.ndarray) -> List[str]:
        """
        Map dense codes of a categorical column back to their original labels.

        Args:
            name: Categorical column name
            codes: Codes to decode

        Returns:
            List[str]: Original labels
        """
        labels = self.labels.get(name)
        if labels is None:
            return [str(int(code)) for code in codes]
        return [labels[int(code)] for code in codes]

    def fingerprint(self) -> str:
        """
        Stable digest of schema, target and cell bytes, used as a cache key.

        Returns:
            str: Hex SHA-256 digest
        """
        digest = hashlib.sha256()
        digest.update(self.target.encode())
        for schema in self.schemas:
            digest.update(f"{schema.name}:{schema.kind.value}".encode())
            digest.update(np.ascontiguousarray(self.columns[schema.name]).tobytes())
        return digest.hexdigest()

    def summary(self) -> Dict[str, Any]:
        target = self.target_schema
        return {
            "n": self.n,
            "target": self.target,
            "target_kind": target.kind.value,
            "features": self.feature_names,
            "dropped_rows": self.dropped_rows,
        }


@dataclass(frozen=True)
class CopulaSample:
    """
    Rank-transformed rows in the open unit hypercube.
    """

    values: np.ndarray
    source_columns: Tuple[str, ...]

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class FeatureMapSpec:
    """
    Statistics function used by the max-entropy copula problem.
    """

    kind: FeatureMapKind
    dimension: int

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be at least 1")

    @property
    def pair_count(self) -> int:
        return self.dimension * (self.dimension - 1) // 2

    @property
    def size(self) -> int:
        """Derived feature count m."""
        d = self.dimension
        if self.kind == FeatureMapKind.PAIRWISE_PRODUCTS:
            return d + self.pair_count
        if self.kind == FeatureMapKind.PAIRWISE_PRODUCTS_PLUS_TAILS:
            return d + d * (d - 1)
        if self.kind == FeatureMapKind.MIXED_SCORES:
            return 4 * d + 9 * self.pair_count
        return 2 * d + d * (d - 1)


@dataclass(frozen=True)
class EntropyEstimate:
    value: float
    kind: EntropyKind
    n_used: int
    bandwidth: Optional[float] = None


@dataclass(frozen=True)
class DualSolution:
    """
    Result of minimizing the max-entropy dual objective.
    """

    theta: np.ndarray
    objective: float
    gradient_norm: float
    iterations: int
    quadrature_points: int
    degenerate: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {
            "objective": self.objective,
            "gradient_norm": self.gradient_norm,
            "iterations": self.iterations,
            "quadrature_points": self.quadrature_points,
            "degenerate": self.degenerate,
        }


@dataclass(frozen=True)
class MiEstimate:
    """
    Nonnegative mutual information in nats plus estimator metadata.
    """

    value: float
    method: EstimationMethod
    components: Dict[str, float] = field(default_factory=dict)
    degenerate: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {
            "value": self.value,
            "method": self.method.value,
            "components": dict(sorted(self.components.items())),
            "degenerate": self.degenerate,
        }


@dataclass(frozen=True)
class Diagnostics:
    hellman_raviv_lower: Optional[float] = None
    brillinger_mse_lower: Optional[float] = None


@dataclass(frozen=True)
class AchievablePerformance:
    """
    Theoretical-best metrics for a (target, feature set) pair.
    """

    mi: MiEstimate
    best_r2: float
    best_log_likelihood: float
    best_rmse: Optional[float] = None
    best_accuracy: Optional[float] = None
    diagnostics: Diagnostics = field(default_factory=Diagnostics)
    features: Tuple[str, ...] = ()
    q: Optional[int] = None

    @property
    def is_classification(self) -> bool:
        return self.best_accuracy is not None

    @property
    def best_r2_normalized(self) -> Optional[float]:
        """Best R² relative to its classification ceiling 1 - e^(-2 log q)."""
        if self.q is None:
            return None
        return self.best_r2 / (1.0 - math.exp(-2.0 * math.log(self.q)))

    def metric(self, name: str) -> Optional[float]:
        return {
            "r2": self.best_r2,
            "rmse": self.best_rmse,
            "accuracy": self.best_accuracy,
            "log_likelihood": self.best_log_likelihood,
        }.get(name)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "features": list(self.features),
            "mi": self.mi.to_dict(),
            "best_r2": self.best_r2,
            "best_r2_normalized": self.best_r2_normalized,
            "best_rmse": self.best_rmse,
            "best_accuracy": self.best_accuracy,
            "best_log_likelihood": self.best_log_likelihood,
            "hellman_raviv_lower": self.diagnostics.hellman_raviv_lower,
            "brillinger_mse_lower": self.diagnostics.brillinger_mse_lower,
        }


@dataclass(frozen=True)
class GeneralizedMetrics:
    """
    Generalized R² and MSE of a trained model, from I(y; z) with z its predictions.
    """

    mi: MiEstimate
    generalized_r2: float
    generalized_mse: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mi": self.mi.to_dict(),
            "generalized_r2": self.generalized_r2,
            "generalized_mse": self.generalized_mse,
        }


@dataclass(frozen=True)
class IncrementalValue:
    """
    Achievable performance before and after adding new features.

    ``boost`` maps each metric to its improvement, floored at 0 (for RMSE the
    improvement is the decrease).
    """

    old: AchievablePerformance
    combined: AchievablePerformance
    boost: Dict[str, float]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "old": self.old.to_dict(),
            "combined": self.combined.to_dict(),
            "boost": dict(sorted(self.boost.items())),
        }


@dataclass(frozen=True)
class SelectionStep:
    order: int
    variable: str
    running_mi: float
    running_best_r2: float
    running_best_rmse: Optional[float] = None
    running_best_accuracy: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class SelectionTrace:
    """
    Ordered greedy selection with running achievable metrics.

    ``baseline`` is the "No Variable" row 0 (mi = 0).
    """

    steps: Tuple[SelectionStep, ...]
    stop_reason: StopReason
    baseline: Optional[SelectionStep] = None
    skipped: Dict[str, str] = field(default_factory=dict)

    @property
    def variables(self) -> List[str]:
        return [step.variable for step in self.steps]

    def rank(self, variable: str) -> Optional[int]:
        for step in self.steps:
            if step.variable == variable:
                return step.order
        return None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "baseline": self.baseline.to_dict() if self.baseline else None,
            "steps": [step.to_dict() for step in self.steps],
            "stop_reason": self.stop_reason.value,
            "skipped": dict(sorted(self.skipped.items())),
        }


@dataclass(frozen=True)
class UnderusedVariable:
    variable: str
    rank_for_target: int
    rank_for_model: int

    @property
    def shift(self) -> int:
        return self.rank_for_model - self.rank_for_target

    def to_dict(self) -> Dict[str, Any]:
        return {**asdict(self), "shift": self.shift}


@dataclass(frozen=True)
class UnderuseReport:
    """
    Variables the target ranks materially higher than the model does.

    When the model trace cannot be built, ``entries`` is empty, ``warning``
    says why and ``target_trace`` is the whole report.
    """

    entries: Tuple[UnderusedVariable, ...]
    target_trace: SelectionTrace
    model_trace: Optional[SelectionTrace] = None
    warning: Optional[str] = None

    @property
    def variables(self) -> List[str]:
        return [entry.variable for entry in self.entries]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "underused": [entry.to_dict() for entry in self.entries],
            "target_trace": self.target_trace.to_dict(),
            "model_trace": self.model_trace.to_dict() if self.model_trace else None,
            "warning": self.warning,
        }


@dataclass(frozen=True)
class ResidualIteration:
    """Residual target y - f0(x) and its achievable performance."""

    dataset: Dataset
    valuation: AchievablePerformance

    def to_dict(self) -> Dict[str, Any]:
        return {"residual_target": self.dataset.target, **self.valuation.to_dict()}


@dataclass(frozen=True)
class MonitorConfig:
    """
    Early-termination rule against a theoretical-best value.
    """

    best_value: float
    metric_direction: MetricDirection = MetricDirection.HIGHER_IS_BETTER
    threshold: float = 0.0
    patience: int = 1

    def __post_init__(self):
        if not math.isfinite(self.best_value):
            raise ValueError("best_value must be finite")
        if not math.isfinite(self.threshold) or self.threshold < 0:
            raise ValueError("threshold must be finite and nonnegative")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")


class Action(str, Enum):
    CONTINUE = "CONTINUE"
    TERMINATE = "TERMINATE"


@dataclass(frozen=True)
class MonitorDecision:
    action: Action
    reason: Optional[str] = None

    @property
    def terminate(self) -> bool:
        return self.action == Action.TERMINATE

    def render(self) -> str:
        """Protocol reply line, without the trailing newline."""
        if self.terminate:
            return f"TERMINATE reason={self.reason}"
        return "CONTINUE"


@dataclass(frozen=True)
class BatchAnalysis:
    """
    Ex-post statistics of early termination over a batch of training runs.
    """

    runs: int
    terminated_runs: int
    overfit_rate: float
    regret: float
    opportunity_cost: float
    overfit_rate_terminated: Optional[float] = None
    overfit_rate_continued: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class EpochRecord:
    index: int
    train_metric: float
    holdout_metric: Optional[float] = None


@dataclass(frozen=True)
class RunRecord:
    run_id: str
    epochs: Tuple[EpochRecord, ...]
    final_train: float
    final_holdout: Optional[float] = None
    terminated_at: Optional[int] = None

    def __post_init__(self):
        indices = [epoch.index for epoch in self.epochs]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise ValueError(f"Epoch indices of run '{self.run_id}' must increase")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "run_id": self.run_id,
            "epochs": [asdict(epoch) for epoch in self.epochs],
            "final_train": self.final_train,
            "final_holdout": self.final_holdout,
            "terminated_at": self.terminated_at,
        }


@dataclass(frozen=True)
class SynthSpec:
    """
    Synthetic regression or classification problem on the unit hypercube.

    Exactly one of ``sigma`` (regression) or ``p_e`` (classification) is set.
    ``repetition`` selects the noise stream; the inputs depend on ``seed`` only.
    """

    f_id: str
    d: int
    sigma: Optional[float] = None
    p_e: Optional[float] = None
    n: Optional[int] = None
    seed: int = 0
    repetition: int = 0

    def __post_init__(self):
        if self.f_id not in ("f1", "f2", "f3", "f4"):
            raise ValueError(f"Unknown function '{self.f_id}'")
        if self.d < 1:
            raise ValueError("d must be at least 1")
        if (self.sigma is None) == (self.p_e is None):
            raise ValueError("Set exactly one of sigma (regression) or p_e")
        if self.sigma is not None and self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.p_e is not None and not 0.0 <= self.p_e <= 0.5:
            raise ValueError("p_e must lie in [0, 0.5]")
        if self.n is not None and self.n < 2:
            raise ValueError("n must be at least 2")

    @property
    def is_regression(self) -> bool:
        return self.sigma is not None

    @property
    def size(self) -> int:
        return self.n if self.n is not None else 1000 * self.d


@dataclass(frozen=True)
class RecoveryCell:
    """
    Estimated best metrics over repetitions of one synthetic problem, next to
    their ground truth. ``metrics`` maps a metric name to (truth, mean, sd).
    """

    f_id: str
    d: int
    noise: float
    repetitions: int
    metrics: Dict[str, Tuple[float, float, float]]

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "f_id": self.f_id,
            "d": self.d,
            "noise": self.noise,
            "repetitions": self.repetitions,
        }
        for name, (truth, mean, sd) in sorted(self.metrics.items()):
            data[f"{name}_truth"] = truth
            data[f"{name}_mean"] = mean
            data[f"{name}_sd"] = sd
        return data
