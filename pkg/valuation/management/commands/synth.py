import logging
from typing import Any, List, Optional

from django.core.management.base import CommandError, CommandParser

from valuation.management.base import EXIT_DATA_ERROR, LeanVizCommand, comma_list
from valuation.reports import Report
from valuation.services.dataset_service import DatasetService
from valuation.services.models.data_models import SynthSpec
from valuation.services.monitor_service import dump_runs
from valuation.services.synthbench import (
    FUNCTIONS,
    generate,
    ground_truth,
    recovery_grid,
    sigma_for_target_r2,
    simulate_training_runs,
)

logger = logging.getLogger(__name__)

DEFAULT_GRID_R2 = (0.75, 0.5, 0.25)
DEFAULT_GRID_P_E = (0.0, 0.25)


class Command(LeanVizCommand):
    help = (
        "Synthetic benchmarks: a dataset as CSV on stdout, simulated training runs "
        "(--runs) or a recovery grid of estimated vs. true best metrics (--grid)"
    )

    def add_arguments(self, parser: CommandParser) -> None:
        super().add_arguments(parser)
        parser.add_argument("--f", dest="f_id", choices=sorted(FUNCTIONS), default="f1")
        parser.add_argument("--d", type=int, default=2, help="Input dimension")
        noise = parser.add_mutually_exclusive_group()
        noise.add_argument("--sigma", type=float, help="Regression noise level")
        noise.add_argument("--p-e", type=float, help="Classification label-flip probability")
        noise.add_argument("--r2", type=float, help="Regression with this best R²")
        parser.add_argument("--n", type=int, help="Rows (default: 1000 * d)")
        parser.add_argument("--repetition", type=int, default=0, help="Noise stream")

        parser.add_argument("--runs", type=int, help="Emit this many simulated training runs")
        parser.add_argument("--best", type=float, default=0.82)
        parser.add_argument("--overfit-share", type=float, default=0.76)
        parser.add_argument("--epochs", type=int, default=100)

        parser.add_argument("--grid", choices=["regression", "classification"])
        parser.add_argument("--functions", help="Comma-separated function ids")
        parser.add_argument("--dims", help="Comma-separated dimensions")
        parser.add_argument("--noises", help="Comma-separated sigma or p_e values")
        parser.add_argument("--repetitions", type=int, default=10)

    def run(self, **options: Any) -> Optional[Report]:
        seed = options.get("seed") or 0
        try:
            if options.get("runs") is not None:
                return self._runs(seed, options)
            if options.get("grid"):
                return self._grid(seed, options)
            return self._dataset(seed, options)
        except ValueError as e:
            raise CommandError(str(e), returncode=EXIT_DATA_ERROR)

    def spec(self, seed: int, options: dict) -> SynthSpec:
        sigma = options.get("sigma")
        if options.get("r2") is not None:
            sigma = sigma_for_target_r2(options["r2"])
        if sigma is None and options.get("p_e") is None:
            sigma = 1.0
        return SynthSpec(
            f_id=options["f_id"],
            d=options["d"],
            sigma=sigma,
            p_e=options.get("p_e"),
            n=options.get("n"),
            seed=seed,
            repetition=options["repetition"],
        )

    def _dataset(self, seed: int, options: dict) -> None:
        spec = self.spec(seed, options)
        dataset = generate(spec)
        logger.info(f"Ground truth of {spec}: {ground_truth(spec)}")
        frame = DatasetService().to_frame(dataset)
        self.stdout.write(frame.to_csv(index=False), ending="")
        return None

    def _runs(self, seed: int, options: dict) -> None:
        if options["runs"] < 1:
            raise ValueError("--runs must be at least 1")
        if options["epochs"] < 1:
            raise ValueError("--epochs must be at least 1")
        runs = simulate_training_runs(
            n_runs=options["runs"],
            best_value=options["best"],
            overfit_share=options["overfit_share"],
            epochs=options["epochs"],
            seed=seed,
        )
        dump_runs(runs, self.stdout)
        return None

    def _grid(self, seed: int, options: dict) -> Report:
        _, solver, _ = self.load_configs(options)
        classification = options["grid"] == "classification"
        functions = comma_list(options.get("functions")) or ["f1", "f2"]
        unknown = sorted(set(functions) - set(FUNCTIONS))
        if unknown:
            raise ValueError(f"Unknown functions: {unknown}")
        dims = [int(d) for d in comma_list(options.get("dims")) or ["1", "2"]]

        noises: List[float]
        if options.get("noises"):
            noises = [float(value) for value in comma_list(options["noises"])]
        elif classification:
            noises = list(DEFAULT_GRID_P_E)
        else:
            noises = [sigma_for_target_r2(r2) for r2 in DEFAULT_GRID_R2]

        cells = recovery_grid(
            functions,
            dims,
            noises,
            classification=classification,
            repetitions=options["repetitions"],
            seed=seed,
            cfg=solver,
        )
        report = Report(
            command="synth",
            arguments={
                "grid": options["grid"],
                "functions": functions,
                "dims": dims,
                "noises": noises,
                "repetitions": options["repetitions"],
                "seed": seed,
            },
        )
        report.add_table("recovery", [cell.to_dict() for cell in cells])
        report.metadata = {"solver": solver.to_dict()}
        return report
