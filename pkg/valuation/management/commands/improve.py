import logging
from typing import Any, List, Optional

import numpy as np
import pandas as pd
from django.core.management.base import CommandError, CommandParser

from valuation.management.base import EXIT_DATA_ERROR, LeanVizCommand, comma_list
from valuation.reports import Report
from valuation.services.base import DataError, LeanVizError, SchemaError
from valuation.services.models.data_models import Dataset, SolverConfig
from valuation.services.selection_service import SelectionService
from valuation.services.valuation_service import (
    ValuationService,
    is_likely_overfit,
    suboptimality_gap,
)

logger = logging.getLogger(__name__)

PREDICTION_COLUMN = "prediction"
DEFAULT_THRESHOLD = 0.02

SEEK_NEW_VARIABLES = "seek new variables"
IMPROVE_MODEL = "improve the model"
LIKELY_OVERFIT = "model likely overfit"


def read_predictions(path: str, categorical: bool) -> List[Any]:
    """
    Read model predictions from a CSV file.

    Uses the ``prediction`` column when present, else the first column.

    Raises:
        DataError: If the file cannot be read
        SchemaError: If regression predictions are not numeric
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except FileNotFoundError as e:
        raise DataError(f"File not found: {path}", source="predictions", original_error=e)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"Cannot read {path}: {str(e)}", source="predictions", original_error=e)
    if frame.shape[1] == 0:
        raise SchemaError(f"No column in {path}", source="predictions")

    column = PREDICTION_COLUMN if PREDICTION_COLUMN in frame.columns else frame.columns[0]
    values = [value.strip() for value in frame[column]]
    if categorical:
        return values
    try:
        numbers = np.asarray(values, dtype=np.float64)
    except ValueError as e:
        raise SchemaError(
            f"Non-numeric prediction in {path}", source="predictions", original_error=e
        )
    if not np.all(np.isfinite(numbers)):
        raise SchemaError(f"Non-finite prediction in {path}", source="predictions")
    return list(numbers)


def recommendation(gap: float, threshold: float) -> str:
    if is_likely_overfit(gap, threshold):
        return LIKELY_OVERFIT
    if abs(gap) <= threshold:
        return SEEK_NEW_VARIABLES
    return IMPROVE_MODEL


class Command(LeanVizCommand):
    help = "Step 4: headroom of a trained model, or value of new variables"

    def add_arguments(self, parser: CommandParser) -> None:
        super().add_arguments(parser)
        parser.add_argument("--predictions", help="CSV file with the model's predictions")
        parser.add_argument(
            "--threshold",
            type=float,
            default=DEFAULT_THRESHOLD,
            help="Gap below which the model counts as optimal",
        )
        parser.add_argument("--new-features", help="Comma-separated candidate variables")
        parser.add_argument(
            "--base-features",
            help="Comma-separated variables in use (default: every other feature)",
        )
        parser.add_argument("--capacity", type=int, help="Capacity of both selections")
        parser.add_argument("--fraction", type=float, help="Fraction rule of both selections")

    def run(self, **options: Any) -> Report:
        if bool(options.get("predictions")) == bool(options.get("new_features")):
            raise CommandError(
                "Pass exactly one of --predictions or --new-features",
                returncode=EXIT_DATA_ERROR,
            )
        if options["threshold"] < 0:
            raise CommandError("--threshold must be nonnegative", returncode=EXIT_DATA_ERROR)

        ingest, solver, select = self.load_configs(options)
        dataset = self.load_dataset(options, ingest)
        report = Report(
            command="improve",
            arguments=self.arguments(
                options,
                "predictions",
                "threshold",
                "new_features",
                "base_features",
                "capacity",
                "fraction",
            ),
            dataset=dataset.summary(),
        )
        if options.get("new_features"):
            self._incremental(report, dataset, solver, options)
        else:
            self._model(report, dataset, solver, select, options)
        report.metadata["solver"] = solver.to_dict()
        return report

    def _incremental(
        self, report: Report, dataset: Dataset, solver: SolverConfig, options: dict
    ) -> None:
        new_features = comma_list(options["new_features"])
        base_features: Optional[List[str]] = comma_list(options.get("base_features"))
        if base_features is None:
            base_features = [f for f in dataset.feature_names if f not in new_features]

        result = ValuationService(solver).incremental_value(
            dataset, base_features, new_features
        )
        rows = []
        for label, performance in (("base", result.old), ("combined", result.combined)):
            rows.append(
                {
                    "set": label,
                    "features": list(performance.features),
                    "mi": performance.mi.value,
                    "best_r2": performance.best_r2,
                    "best_rmse": performance.best_rmse,
                    "best_accuracy": performance.best_accuracy,
                    "best_log_likelihood": performance.best_log_likelihood,
                }
            )
        report.add_table("incremental_value", rows)
        report.add_table(
            "boost",
            [{"metric": name, "boost": value} for name, value in sorted(result.boost.items())],
        )

    def _model(
        self,
        report: Report,
        dataset: Dataset,
        solver: SolverConfig,
        select: Any,
        options: dict,
    ) -> None:
        target = dataset.target_schema
        predictions = read_predictions(options["predictions"], target.is_categorical)
        if len(predictions) != dataset.n:
            raise SchemaError(
                f"{len(predictions)} predictions for {dataset.n} rows", source="improve"
            )

        valuation_service = ValuationService(solver)
        achievable = valuation_service.value(dataset, dataset.feature_names)
        y = dataset.column(dataset.target)
        if target.is_categorical:
            labels = dataset.decode(dataset.target, y)
            metric = "accuracy"
            model_perf = float(np.mean([a == b for a, b in zip(labels, predictions)]))
            observed: List[Any] = labels
        else:
            metric = "rmse"
            z = np.asarray(predictions, dtype=np.float64)
            model_perf = float(np.sqrt(np.mean((y - z) ** 2)))
            observed = list(y)

        threshold = options["threshold"]
        gap = suboptimality_gap(model_perf, achievable, metric)
        advice = recommendation(gap, threshold)
        report.add_table(
            "suboptimality",
            [
                {
                    "metric": metric,
                    "model": model_perf,
                    "achievable": achievable.metric(metric),
                    "gap": gap,
                    "threshold": threshold,
                    "recommendation": advice,
                }
            ],
        )
        if advice == LIKELY_OVERFIT:
            report.messages.append(f"warning: {LIKELY_OVERFIT} (gap {gap:.4g} < -{threshold:g})")

        try:
            generalized = valuation_service.model_generalized_metrics(
                observed, predictions, categorical=target.is_categorical
            )
            report.add_table(
                "generalized_metrics",
                [
                    {
                        "mi": generalized.mi.value,
                        "generalized_r2": generalized.generalized_r2,
                        "generalized_mse": generalized.generalized_mse,
                    }
                ],
            )
        except LeanVizError as e:
            logger.warning(f"Generalized metrics unavailable: {e}")
            report.messages.append(f"warning: generalized metrics unavailable ({e})")

        selection_service = SelectionService(solver)
        underuse = selection_service.underused_variables(dataset, predictions, select)
        report.add_table(
            "underused",
            [entry.to_dict() for entry in underuse.entries],
            ["variable", "rank_for_target", "rank_for_model", "shift"],
        )
        if underuse.warning:
            report.messages.append(f"warning: {underuse.warning}")

        if not target.is_categorical:
            residual = selection_service.residual_iteration(dataset, predictions)
            valuation = residual.valuation
            report.add_table(
                "residual_valuation",
                [
                    {
                        "target": residual.dataset.target,
                        "mi": valuation.mi.value,
                        "best_r2": valuation.best_r2,
                        "best_rmse": valuation.best_rmse,
                    }
                ],
            )
        report.metadata["recommendation"] = advice
