"""
Model-free variable selection.
Greedily adds the feature that raises the mutual information with the target
the most, and compares the selection made for the target with the one made
for a trained model's predictions.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence

import numpy as np
from django.conf import settings

from valuation.services.base import (
    ConstantColumnError,
    EstimationError,
    LeanVizError,
    SchemaError,
)
from valuation.services.dataset_service import DatasetService
from valuation.services.models.data_models import (
    ColumnKind,
    Dataset,
    MiEstimate,
    ResidualIteration,
    SelectConfig,
    SelectionStep,
    SelectionTrace,
    SolverConfig,
    StopReason,
    UnderusedVariable,
    UnderuseReport,
)
from valuation.services.mutual_information import estimation_method, mutual_information
from valuation.services.valuation_service import ValuationService

logger = logging.getLogger(__name__)

BASELINE_LABEL = "No Variable"

# Rank gap at which a variable counts as underused by a model.
MATERIAL_RANK_SHIFT = 2


class SelectionService:
    """Service running greedy selection and model-improvement diagnostics."""

    def __init__(self, solver_cfg: Optional[SolverConfig] = None):
        self.solver_cfg = solver_cfg or SolverConfig.from_settings()
        self.valuation_service = ValuationService(self.solver_cfg)
        self.dataset_service = DatasetService()

    def _step(
        self,
        order: int,
        variable: str,
        dataset: Dataset,
        selected: List[str],
        mi: MiEstimate,
    ) -> SelectionStep:
        performance = self.valuation_service.from_mi(dataset, mi, selected)
        return SelectionStep(
            order=order,
            variable=variable,
            running_mi=mi.value,
            running_best_r2=performance.best_r2,
            running_best_rmse=performance.best_rmse,
            running_best_accuracy=performance.best_accuracy,
        )

    def _evaluate(
        self, dataset: Dataset, selected: List[str], candidates: List[str]
    ) -> Dict[str, object]:
        workers = max(1, min(getattr(settings, "LEANVIZ_THREADS", 1), len(candidates)))
        with ThreadPoolExecutor(max_workers=workers) as executor:
            futures = {
                name: executor.submit(
                    mutual_information, dataset, [*selected, name], self.solver_cfg
                )
                for name in candidates
            }
        results: Dict[str, object] = {}
        for name in candidates:
            try:
                results[name] = futures[name].result()
            except LeanVizError as e:
                results[name] = e
        return results

    def greedy_select(
        self, dataset: Dataset, cfg: Optional[SelectConfig] = None
    ) -> SelectionTrace:
        """
        Order features by how much each one adds to what is already selected.

        Step 1 picks the single most informative feature; every later step
        picks the feature maximizing I(y; selected + candidate). Ties go to
        the earlier column. Selection stops at ``cfg.capacity`` features, once
        the running best R² reaches ``cfg.fraction`` of the full-set best R²
        (only when fraction < 1), or when features run out.

        Args:
            dataset: Dataset with at least one feature
            cfg: Stopping rules

        Returns:
            SelectionTrace: Steps with running achievable metrics

        Raises:
            ValueError: If the dataset has no feature
            EstimationError: If every candidate of the first step fails
        """
        cfg = cfg or SelectConfig()
        features = dataset.feature_names
        if not features:
            raise ValueError("Variable selection needs at least one feature")
        capacity = cfg.capacity or len(features)

        full_r2 = None
        if cfg.fraction < 1.0:
            try:
                full_r2 = self.valuation_service.value(dataset, features).best_r2
            except LeanVizError as e:
                logger.warning(f"Full-set valuation failed, fraction rule disabled: {e}")

        baseline = self._step(
            0,
            BASELINE_LABEL,
            dataset,
            [],
            MiEstimate(value=0.0, method=estimation_method(self.solver_cfg)),
        )
        selected: List[str] = []
        steps: List[SelectionStep] = []
        skipped: Dict[str, str] = {}
        remaining = list(features)
        stop_reason = StopReason.EXHAUSTED

        while remaining:
            results = self._evaluate(dataset, selected, remaining)

            best_name, best_mi = None, None
            for name in remaining:
                result = results[name]
                if isinstance(result, LeanVizError):
                    logger.warning(f"Skipping candidate '{name}': {result}")
                    skipped[name] = str(result)
                    continue
                if best_mi is None or result.value > best_mi.value:
                    best_name, best_mi = name, result
            remaining = [name for name in remaining if name not in skipped]

            if best_name is None:
                if not steps:
                    raise EstimationError(
                        f"Every candidate failed: {sorted(skipped)}", source="greedy_select"
                    )
                break

            selected.append(best_name)
            remaining.remove(best_name)
            step = self._step(len(selected), best_name, dataset, selected, best_mi)
            steps.append(step)
            logger.info(
                f"Step {step.order}: {best_name} (mi={step.running_mi:.4f}, "
                f"best R²={step.running_best_r2:.4f})"
            )

            if len(selected) >= capacity:
                stop_reason = StopReason.CAPACITY
                break
            if full_r2 is not None and step.running_best_r2 >= cfg.fraction * full_r2:
                stop_reason = StopReason.FRACTION_REACHED
                break

        return SelectionTrace(
            steps=tuple(steps), stop_reason=stop_reason, baseline=baseline, skipped=skipped
        )

    def underused_variables(
        self,
        dataset: Dataset,
        predictions: Sequence,
        cfg: Optional[SelectConfig] = None,
    ) -> UnderuseReport:
        """
        Variables the target ranks at least two places higher than a model does.

        Greedy selection runs once for the target and once with the model's
        predictions as target; variables missing from a trace rank last.

        Args:
            dataset: Dataset with the observed target
            predictions: Model predictions aligned with the rows
            cfg: Stopping rules for both selections

        Returns:
            UnderuseReport: Variables sorted by decreasing rank shift
        """
        if len(predictions) != dataset.n:
            raise SchemaError(
                f"{len(predictions)} predictions for {dataset.n} rows",
                source="underused_variables",
            )
        target_trace = self.greedy_select(dataset, cfg)

        try:
            if len(np.unique(np.asarray(predictions))) < 2:
                raise ConstantColumnError("prediction", source="underused_variables")
            model_dataset = self.dataset_service.retarget(
                dataset,
                f"{dataset.target}_predicted",
                predictions,
                kind=dataset.target_schema.kind,
            )
            model_trace = self.greedy_select(model_dataset, cfg)
        except LeanVizError as e:
            warning = (
                f"Selection on model predictions failed ({e}); "
                "reporting the target trace only"
            )
            logger.warning(warning)
            return UnderuseReport(entries=(), target_trace=target_trace, warning=warning)

        last = len(dataset.feature_names) + 1
        entries = [
            UnderusedVariable(
                variable=name,
                rank_for_target=target_trace.rank(name) or last,
                rank_for_model=model_trace.rank(name) or last,
            )
            for name in dataset.feature_names
        ]
        entries = sorted(
            (entry for entry in entries if entry.shift >= MATERIAL_RANK_SHIFT),
            key=lambda entry: (-entry.shift, entry.rank_for_target),
        )
        return UnderuseReport(
            entries=tuple(entries), target_trace=target_trace, model_trace=model_trace
        )

    def residual_iteration(
        self, dataset: Dataset, predictions: Sequence
    ) -> ResidualIteration:
        """
        Value the residuals y - f0(x) of a regression model.

        Args:
            dataset: Dataset with a continuous target
            predictions: Model predictions f0(x) aligned with the rows

        Returns:
            ResidualIteration: Residual dataset and its achievable performance

        Raises:
            ValueError: If the target is categorical
        """
        if dataset.target_schema.kind != ColumnKind.CONTINUOUS:
            raise ValueError("Residual iteration needs a continuous target")
        if len(predictions) != dataset.n:
            raise SchemaError(
                f"{len(predictions)} predictions for {dataset.n} rows",
                source="residual_iteration",
            )
        y = dataset.column(dataset.target)
        residuals = y - np.asarray(predictions, dtype=np.float64)
        residual_dataset = self.dataset_service.retarget(
            dataset, f"{dataset.target}_residual", residuals
        )
        valuation = self.valuation_service.value(
            residual_dataset, residual_dataset.feature_names
        )
        return ResidualIteration(dataset=residual_dataset, valuation=valuation)
