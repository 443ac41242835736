import logging
import sys
from pathlib import Path
from typing import Any, Optional

from django.core.management.base import CommandError, CommandParser

from valuation.management.base import EXIT_DATA_ERROR, LeanVizCommand
from valuation.reports import Report
from valuation.serializers import MonitorConfigSerializer, validate
from valuation.services.base import ConfigurationError, DataError, LeanVizError
from valuation.services.models.data_models import MetricDirection, MonitorConfig
from valuation.services.monitor_service import batch_analysis, load_runs, run_protocol

logger = logging.getLogger(__name__)

EXIT_TERMINATE = 10


class Command(LeanVizCommand):
    help = (
        "Step 3: stop training runs whose training metric beats the achievable best. "
        "Reads 'epoch=<int> metric=<float>' lines on stdin and answers CONTINUE or "
        "TERMINATE; exits 10 on TERMINATE. With --runs, scores finished runs instead."
    )
    stealth_options = ("stdin",)

    def add_arguments(self, parser: CommandParser) -> None:
        super().add_arguments(parser)
        parser.add_argument("--best", type=float, required=True, help="Achievable best value")
        parser.add_argument(
            "--direction",
            choices=[direction.value for direction in MetricDirection],
            default=MetricDirection.HIGHER_IS_BETTER.value,
        )
        parser.add_argument("--threshold", type=float, default=0.0)
        parser.add_argument("--patience", type=int, default=1)
        parser.add_argument("--runs", help="JSON-lines run records to analyse")
        parser.add_argument(
            "--overfit-margin",
            type=float,
            default=0.10,
            help="Relative train/holdout gap counted as overfitting",
        )

    def monitor_config(self, options: dict) -> MonitorConfig:
        data = {
            "best": options["best"],
            "direction": options["direction"],
            "threshold": options["threshold"],
            "patience": options["patience"],
        }
        try:
            return validate(MonitorConfigSerializer, data)
        except ValueError as e:
            raise ConfigurationError(str(e), source="monitor", original_error=e)

    def run(self, **options: Any) -> Optional[Report]:
        config = self.monitor_config(options)
        if options.get("runs"):
            return self._batch(config, options)

        stdin = options.get("stdin") or sys.stdin

        def reply(line: str) -> None:
            self.stdout.write(line, ending="")
            self.stdout.flush()

        try:
            decision = run_protocol(iter(stdin.readline, ""), reply, config)
        except LeanVizError as e:
            raise CommandError(str(e), returncode=EXIT_DATA_ERROR)
        if decision.terminate:
            raise SystemExit(EXIT_TERMINATE)
        return None

    def _batch(self, config: MonitorConfig, options: dict) -> Report:
        path = Path(options["runs"])
        if not path.is_file():
            raise DataError(f"File not found: {path}", source="monitor")
        with path.open(encoding="utf-8") as stream:
            runs = load_runs(stream)
        try:
            analysis = batch_analysis(runs, config, options["overfit_margin"])
        except ValueError as e:
            raise CommandError(str(e), returncode=EXIT_DATA_ERROR)

        report = Report(
            command="monitor",
            arguments={
                "runs": options["runs"],
                "best": config.best_value,
                "direction": config.metric_direction,
                "threshold": config.threshold,
                "patience": config.patience,
                "overfit_margin": options["overfit_margin"],
            },
        )
        report.add_table("batch_analysis", [analysis.to_dict()])
        return report
