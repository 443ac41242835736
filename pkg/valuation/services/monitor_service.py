"""
Training-run monitor.
Terminates runs whose training metric beats the achievable best (a sign the
model is fitting noise), speaks a one-line-per-epoch protocol with training
loops, and scores a batch of finished runs for overfitting, regret and saved
compute.
"""

import json
import logging
import math
import re
from dataclasses import dataclass, field
from typing import IO, Callable, Iterable, List, Optional, Tuple

from jsonschema import Draft202012Validator
from jsonschema.exceptions import ValidationError

from valuation.services.base import ProtocolError
from valuation.services.models.data_models import (
    Action,
    BatchAnalysis,
    EpochRecord,
    MetricDirection,
    MonitorConfig,
    MonitorDecision,
    RunRecord,
)

logger = logging.getLogger(__name__)

LINE_PATTERN = re.compile(r"^\s*epoch=(?P<epoch>[+-]?\d+)\s+metric=(?P<metric>\S+)\s*$")

RUN_RECORD_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["run_id", "epochs", "final_train"],
    "properties": {
        "run_id": {"type": "string", "minLength": 1},
        "epochs": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["index", "train_metric"],
                "properties": {
                    "index": {"type": "integer"},
                    "train_metric": {"type": "number"},
                    "holdout_metric": {"type": ["number", "null"]},
                },
            },
        },
        "final_train": {"type": "number"},
        "final_holdout": {"type": ["number", "null"]},
        "terminated_at": {"type": ["integer", "null"]},
    },
}

_validator = Draft202012Validator(RUN_RECORD_SCHEMA)


def _beats(value: float, reference: float, direction: MetricDirection) -> float:
    """Signed margin by which ``value`` is better than ``reference``."""
    if direction == MetricDirection.HIGHER_IS_BETTER:
        return value - reference
    return reference - value


@dataclass
class MonitorState:
    """
    Observation history of one training run.

    A state belongs to one run and must not be shared between threads
    concurrently.
    """

    config: MonitorConfig
    violations: int = 0
    observations: int = 0
    decision: MonitorDecision = field(default_factory=lambda: MonitorDecision(Action.CONTINUE))

    def observe(self, epoch_metric: float) -> MonitorDecision:
        """
        Record one training metric and decide whether to stop.

        Termination is sticky: once TERMINATE is returned, every later
        observation returns it too.

        Args:
            epoch_metric: Training metric of the latest epoch

        Returns:
            MonitorDecision: CONTINUE, or TERMINATE with a reason

        Raises:
            ValueError: If the metric is not finite
        """
        if not math.isfinite(epoch_metric):
            raise ValueError(f"Metric must be finite, got {epoch_metric}")
        self.observations += 1
        if self.decision.terminate:
            return self.decision

        margin = _beats(epoch_metric, self.config.best_value, self.config.metric_direction)
        self.violations = self.violations + 1 if margin > self.config.threshold else 0

        if self.violations >= self.config.patience:
            self.decision = MonitorDecision(
                Action.TERMINATE,
                reason=(
                    f"train metric {epoch_metric:g} beats best {self.config.best_value:g} "
                    f"by more than {self.config.threshold:g} for "
                    f"{self.violations} observation(s)"
                ),
            )
            logger.info(f"Terminating after {self.observations} epochs: {self.decision.reason}")
        return self.decision


def observe(state: MonitorState, epoch_metric: float) -> MonitorDecision:
    """Functional form of ``MonitorState.observe``."""
    return state.observe(epoch_metric)


def replay_termination(run: RunRecord, config: MonitorConfig) -> Optional[int]:
    """
    Epoch index at which the monitor would have stopped a run, if any.

    Args:
        run: Recorded run
        config: Termination rule

    Returns:
        Optional[int]: Index of the terminating epoch, None if it ran to the end
    """
    state = MonitorState(config)
    for epoch in run.epochs:
        if state.observe(epoch.train_metric).terminate:
            return epoch.index
    return None


def batch_analysis(
    runs: List[RunRecord], config: MonitorConfig, overfit_margin: float = 0.10
) -> BatchAnalysis:
    """
    Score early termination over a batch of finished runs.

    A run is overfit when its final holdout metric is at least
    ``overfit_margin`` (relative) worse than its final training metric.
    Runs without ``terminated_at`` are replayed through the monitor.

    Args:
        runs: Nonempty list of runs with final holdout metrics
        config: Termination rule, whose best_value defines regret
        overfit_margin: Relative gap defining overfitting

    Returns:
        BatchAnalysis: Overfit rate, regret and opportunity cost

    Raises:
        ValueError: If runs is empty or a run lacks its final holdout metric
    """
    if not runs:
        raise ValueError("batch_analysis needs at least one run")
    missing = [run.run_id for run in runs if run.final_holdout is None]
    if missing:
        raise ValueError(f"Runs without a final holdout metric: {missing}")

    direction = config.metric_direction
    terminated: List[bool] = []
    overfit: List[bool] = []
    regretted = 0
    executed = total = 0

    for run in runs:
        stop = run.terminated_at
        if stop is None:
            stop = replay_termination(run, config)
        is_terminated = stop is not None
        terminated.append(is_terminated)

        total += len(run.epochs)
        if is_terminated:
            executed += sum(1 for epoch in run.epochs if epoch.index <= stop)
        else:
            executed += len(run.epochs)

        if direction == MetricDirection.HIGHER_IS_BETTER:
            overfit.append(run.final_holdout <= run.final_train * (1.0 - overfit_margin))
        else:
            overfit.append(run.final_holdout >= run.final_train * (1.0 + overfit_margin))

        if is_terminated and _beats(run.final_holdout, config.best_value, direction) > 0:
            regretted += 1

    n_terminated = sum(terminated)

    def rate(flags: List[bool]) -> Optional[float]:
        return sum(flags) / len(flags) if flags else None

    return BatchAnalysis(
        runs=len(runs),
        terminated_runs=n_terminated,
        overfit_rate=rate(overfit),
        regret=regretted / n_terminated if n_terminated else 0.0,
        opportunity_cost=1.0 - executed / total if total else 0.0,
        overfit_rate_terminated=rate([o for o, t in zip(overfit, terminated) if t]),
        overfit_rate_continued=rate([o for o, t in zip(overfit, terminated) if not t]),
    )


def parse_line(line: str) -> Tuple[int, float]:
    """
    Parse one ``epoch=<int> metric=<float>`` protocol line.

    Raises:
        ProtocolError: If the line is malformed or the metric is not finite
    """
    match = LINE_PATTERN.match(line)
    if match is None:
        raise ProtocolError(f"Malformed line: {line.strip()!r}", source="monitor")
    try:
        metric = float(match.group("metric"))
    except ValueError as e:
        raise ProtocolError(
            f"Metric is not a number: {match.group('metric')!r}",
            source="monitor",
            original_error=e,
        )
    if not math.isfinite(metric):
        raise ProtocolError(f"Metric must be finite, got {metric}", source="monitor")
    return int(match.group("epoch")), metric


def run_protocol(
    lines: Iterable[str], write: Callable[[str], None], config: MonitorConfig
) -> MonitorDecision:
    """
    Serve the monitor protocol until TERMINATE or the end of input.

    Blank lines are ignored; every other line gets exactly one reply.

    Args:
        lines: Incoming protocol lines
        write: Callback receiving each reply line (newline included)
        config: Termination rule

    Returns:
        MonitorDecision: The last decision (CONTINUE when input ended)

    Raises:
        ProtocolError: On a malformed line or a non-increasing epoch index
    """
    state = MonitorState(config)
    last_epoch = None
    for line in lines:
        if not line.strip():
            continue
        epoch, metric = parse_line(line)
        if last_epoch is not None and epoch <= last_epoch:
            raise ProtocolError(
                f"Epoch {epoch} does not follow epoch {last_epoch}", source="monitor"
            )
        last_epoch = epoch
        decision = state.observe(metric)
        write(decision.render() + "\n")
        if decision.terminate:
            return decision
    return state.decision


def load_runs(stream: IO[str]) -> List[RunRecord]:
    """
    Read JSON-lines run records.

    Args:
        stream: Text stream with one JSON object per line

    Returns:
        List[RunRecord]: Parsed runs, in file order

    Raises:
        ProtocolError: On invalid JSON or a record violating the run schema
    """
    runs = []
    for number, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as e:
            raise ProtocolError(
                f"Line {number} is not JSON: {str(e)}", source="load_runs", original_error=e
            )
        try:
            _validator.validate(data)
        except ValidationError as e:
            raise ProtocolError(
                f"Line {number} is not a run record: {e.message}",
                source="load_runs",
                original_error=e,
            )
        try:
            runs.append(
                RunRecord(
                    run_id=data["run_id"],
                    epochs=tuple(
                        EpochRecord(
                            index=epoch["index"],
                            train_metric=float(epoch["train_metric"]),
                            holdout_metric=epoch.get("holdout_metric"),
                        )
                        for epoch in data["epochs"]
                    ),
                    final_train=float(data["final_train"]),
                    final_holdout=data.get("final_holdout"),
                    terminated_at=data.get("terminated_at"),
                )
            )
        except ValueError as e:
            raise ProtocolError(
                f"Line {number}: {str(e)}", source="load_runs", original_error=e
            )
    return runs


def dump_runs(runs: Iterable[RunRecord], stream: IO[str]) -> None:
    """Write run records as JSON lines with sorted keys."""
    for run in runs:
        stream.write(json.dumps(run.to_dict(), sort_keys=True) + "\n")
