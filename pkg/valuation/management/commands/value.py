from typing import Any

from django.core.management.base import CommandParser

from valuation.management.base import LeanVizCommand, comma_list
from valuation.reports import Report
from valuation.services.valuation_service import ValuationService


class Command(LeanVizCommand):
    help = "Step 1: achievable performance of the target given the features"

    def add_arguments(self, parser: CommandParser) -> None:
        super().add_arguments(parser)
        parser.add_argument(
            "--features",
            help="Comma-separated feature names (default: every feature; empty: none)",
        )

    def run(self, **options: Any) -> Report:
        ingest, solver, _ = self.load_configs(options)
        dataset = self.load_dataset(options, ingest)
        features = comma_list(options.get("features"))
        if features is None:
            features = dataset.feature_names

        performance = ValuationService(solver).value(dataset, features)

        report = Report(
            command="value",
            arguments=self.arguments(options, "features"),
            dataset=dataset.summary(),
        )
        row = performance.to_dict()
        report.add_table(
            "valuation",
            [
                {
                    "features": row["features"],
                    "mi": performance.mi.value,
                    "best_r2": row["best_r2"],
                    "best_r2_normalized": row["best_r2_normalized"],
                    "best_rmse": row["best_rmse"],
                    "best_accuracy": row["best_accuracy"],
                    "best_log_likelihood": row["best_log_likelihood"],
                    "hellman_raviv_lower": row["hellman_raviv_lower"],
                    "brillinger_mse_lower": row["brillinger_mse_lower"],
                }
            ],
        )
        if performance.mi.degenerate:
            report.messages.append(
                "warning: near-deterministic dependence, mi hit the entropy floor"
            )
        report.metadata = {
            "method": performance.mi.method,
            "components": performance.mi.to_dict()["components"],
            "degenerate": performance.mi.degenerate,
            "solver": solver.to_dict(),
        }
        return report
