from typing import Any, Dict

from django.core.management.base import CommandParser

from valuation.management.base import LeanVizCommand
from valuation.reports import Report
from valuation.services.models.data_models import SelectionStep
from valuation.services.selection_service import SelectionService

TRACE_COLUMNS = [
    "selection_order",
    "variable",
    "running_mi",
    "running_achievable_r2",
    "running_achievable_rmse",
    "running_achievable_accuracy",
]


def trace_row(step: SelectionStep) -> Dict[str, Any]:
    return {
        "selection_order": step.order,
        "variable": step.variable,
        "running_mi": step.running_mi,
        "running_achievable_r2": step.running_best_r2,
        "running_achievable_rmse": step.running_best_rmse,
        "running_achievable_accuracy": step.running_best_accuracy,
    }


class Command(LeanVizCommand):
    help = "Step 2: model-free greedy variable selection"

    def add_arguments(self, parser: CommandParser) -> None:
        super().add_arguments(parser)
        parser.add_argument("--capacity", type=int, help="Maximum number of variables")
        parser.add_argument(
            "--fraction",
            type=float,
            help="Stop once this share of the full-set achievable R² is reached",
        )

    def run(self, **options: Any) -> Report:
        ingest, solver, select = self.load_configs(options)
        dataset = self.load_dataset(options, ingest)
        trace = SelectionService(solver).greedy_select(dataset, select)

        report = Report(
            command="select",
            arguments=self.arguments(options, "capacity", "fraction"),
            dataset=dataset.summary(),
        )
        rows = [trace_row(step) for step in (trace.baseline, *trace.steps) if step]
        # Regression traces have no accuracy column, classification ones no RMSE
        columns = [c for c in TRACE_COLUMNS if any(row[c] is not None for row in rows)]
        rows = [{column: row[column] for column in columns} for row in rows]
        report.add_table("selection", rows, columns)
        for name, reason in sorted(trace.skipped.items()):
            report.messages.append(f"skipped {name}: {reason}")
        report.metadata = {
            "stop_reason": trace.stop_reason,
            "skipped": sorted(trace.skipped),
            "capacity": select.capacity,
            "fraction": select.fraction,
            "solver": solver.to_dict(),
        }
        return report
