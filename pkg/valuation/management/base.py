"""
Shared plumbing of the leanviz management commands: global flags, config
loading, dataset loading, error-to-exit-code mapping and report output.
"""

import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from django.core.management.base import BaseCommand, CommandError, CommandParser

from valuation.reports import Report
from valuation.serializers import (
    IngestConfigSerializer,
    SelectConfigSerializer,
    SolverConfigSerializer,
    read_key_value_file,
    split_sections,
    validate,
)
from valuation.services.base import LeanVizError, SolverNonConvergenceError
from valuation.services.dataset_service import DatasetService
from valuation.services.models.data_models import (
    Dataset,
    IngestConfig,
    SelectConfig,
    SolverConfig,
)

logger = logging.getLogger(__name__)

EXIT_DATA_ERROR = 2
EXIT_NON_CONVERGENCE = 3


def comma_list(value: Optional[str]) -> Optional[list]:
    if value is None:
        return None
    return [item.strip() for item in value.split(",") if item.strip()]


class LeanVizCommand(BaseCommand):
    """Base class of the leanviz commands."""

    requires_system_checks: list = []

    def add_arguments(self, parser: CommandParser) -> None:
        parser.add_argument("--data", help="CSV file with a header row")
        parser.add_argument("--config", help="key=value configuration file")
        parser.add_argument("--target", help="Target column (default: last column)")
        parser.add_argument("--seed", type=int, help="Quadrature and generator seed")
        parser.add_argument("--method", choices=["mind", "gaussian"], help="MI estimator")
        parser.add_argument("--out", help="Write the JSON-lines report to this path")
        parser.add_argument(
            "--json", action="store_true", help="Print JSON lines instead of text"
        )

    def handle(self, *args: Any, **options: Any) -> None:
        try:
            report = self.run(**options)
        except SolverNonConvergenceError as e:
            raise CommandError(str(e), returncode=EXIT_NON_CONVERGENCE)
        except LeanVizError as e:
            raise CommandError(str(e), returncode=EXIT_DATA_ERROR)
        if report is not None:
            self.emit(report, options)

    def run(self, **options: Any) -> Optional[Report]:
        raise NotImplementedError

    def load_configs(
        self, options: Dict[str, Any]
    ) -> Tuple[IngestConfig, SolverConfig, SelectConfig]:
        """
        Build the run configs: settings defaults, then the config file, then flags.
        """
        sections: Dict[str, Dict[str, Any]] = {"ingest": {}, "solver": {}, "select": {}}
        if options.get("config"):
            sections = split_sections(read_key_value_file(options["config"]))

        if options.get("target"):
            sections["ingest"]["target"] = options["target"]
        for key in ("seed", "method"):
            if options.get(key) is not None:
                sections["solver"][key] = options[key]
        for key in ("capacity", "fraction"):
            if options.get(key) is not None:
                sections["select"][key] = options[key]

        ingest = validate(IngestConfigSerializer, sections["ingest"])
        solver = validate(SolverConfigSerializer, sections["solver"], SolverConfig.from_settings())
        select = validate(SelectConfigSerializer, sections["select"])
        return ingest, solver, select

    def load_dataset(self, options: Dict[str, Any], ingest: IngestConfig) -> Dataset:
        if not options.get("data"):
            raise CommandError("--data is required", returncode=EXIT_DATA_ERROR)
        return DatasetService().load_csv(options["data"], ingest)

    def arguments(self, options: Dict[str, Any], *names: str) -> Dict[str, Any]:
        keys = ("data", "config", "target", "seed", "method", *names)
        return {key: options.get(key) for key in keys if options.get(key) is not None}

    def emit(self, report: Report, options: Dict[str, Any]) -> None:
        if options.get("json"):
            self.stdout.write(report.to_json_lines(), ending="")
        else:
            self.stdout.write(report.to_text(), ending="")
        if options.get("out"):
            Path(options["out"]).write_text(report.to_json_lines(), encoding="utf-8")
            logger.info(f"Report written to {options['out']}")
