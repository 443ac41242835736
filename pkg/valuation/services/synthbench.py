"""
Synthetic benchmark problems with known achievable performance.

Inputs are uniform on [0, 1]^d. Regression targets add Gaussian noise to a
unit-variance function of the inputs; classification targets threshold the
function at its mean and flip labels with probability p_e. Each concern draws
from its own seed stream, so the inputs of a given seed are shared by every
repetition while the noise changes with the repetition.
"""

import logging
import math
from typing import Callable, Dict, Iterable, List, Optional

import numpy as np

from valuation.services.dataset_service import DatasetService
from valuation.services.models.data_models import (
    Dataset,
    EpochRecord,
    RecoveryCell,
    RunRecord,
    SolverConfig,
    SynthSpec,
)
from valuation.services.valuation_service import ValuationService

logger = logging.getLogger(__name__)

MONTE_CARLO_DRAWS = 10**6
MONTE_CARLO_CHUNK = 10**5

# Seed stream identifiers
STREAM_INPUTS = 0
STREAM_MONTE_CARLO = 1
STREAM_NOISE = 2
STREAM_RUNS = 3


def _f1(x: np.ndarray, weights: np.ndarray) -> np.ndarray:
    return x @ weights


def _f2(x: np.ndarray, weights: np.ndarray) -> np.ndarray:
    return np.sqrt(np.abs(x @ weights))


def _f3(x: np.ndarray, weights: np.ndarray) -> np.ndarray:
    return -((np.abs(x - 0.5) @ weights) ** 3)


def _f4(x: np.ndarray, weights: np.ndarray) -> np.ndarray:
    return np.tanh(2.5 * ((x - 0.5) ** 2 @ weights))


FUNCTIONS: Dict[str, Callable[[np.ndarray, np.ndarray], np.ndarray]] = {
    "f1": _f1,
    "f2": _f2,
    "f3": _f3,
    "f4": _f4,
}


def _rng(seed: int, stream: int, *extra: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, stream, *extra]))


def _noise_rng(seed: int, repetition: int) -> np.random.Generator:
    # Counter-based generator keyed by (seed, repetition)
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence([seed, STREAM_NOISE, repetition]))
    )


def raw_function(f_id: str, x: np.ndarray) -> np.ndarray:
    """Unscaled benchmark function evaluated on the rows of ``x``."""
    weights = 1.0 / np.arange(1, x.shape[1] + 1)
    return FUNCTIONS[f_id](x, weights)


def monte_carlo_mean(f_id: str, d: int, seed: int, draws: int = MONTE_CARLO_DRAWS) -> float:
    """
    Monte Carlo mean of the unscaled function under the uniform input law.

    Args:
        f_id: Function identifier
        d: Input dimension
        seed: Seed of the Monte Carlo stream
        draws: Number of uniform draws

    Returns:
        float: Sample mean of the function
    """
    rng = _rng(seed, STREAM_MONTE_CARLO)
    total = 0.0
    done = 0
    while done < draws:
        size = min(MONTE_CARLO_CHUNK, draws - done)
        total += float(raw_function(f_id, rng.random((size, d))).sum())
        done += size
    return total / draws


def generate(spec: SynthSpec) -> Dataset:
    """
    Draw a synthetic dataset.

    Args:
        spec: Problem specification

    Returns:
        Dataset: Continuous columns x1..xd and target y (continuous for
        regression, categorical 0/1 for classification)
    """
    n = spec.size
    x = _rng(spec.seed, STREAM_INPUTS).random((n, spec.d))
    raw = raw_function(spec.f_id, x)
    spread = float(np.std(raw, ddof=1))
    scale = 1.0 / spread if spread > 0 else 1.0
    f = raw * scale

    noise_rng = _noise_rng(spec.seed, spec.repetition)
    columns = {f"x{i + 1}": x[:, i] for i in range(spec.d)}
    if spec.is_regression:
        columns["y"] = f + spec.sigma * noise_rng.standard_normal(n)
        categorical: List[str] = []
    else:
        m = scale * monte_carlo_mean(spec.f_id, spec.d, spec.seed)
        z = (f >= m).astype(np.int64)
        flips = (noise_rng.random(n) < spec.p_e).astype(np.int64)
        columns["y"] = z ^ flips
        categorical = ["y"]

    logger.debug(f"Generated {spec}")
    return DatasetService().from_arrays(columns, target="y", categorical=categorical)


def ground_truth(spec: SynthSpec) -> Dict[str, float]:
    """
    Exact achievable performance of a synthetic problem.

    Returns:
        Dict[str, float]: best_r2 and best_rmse for regression, best_accuracy
        for classification
    """
    if spec.is_regression:
        return {"best_r2": 1.0 / (1.0 + spec.sigma**2), "best_rmse": spec.sigma}
    return {"best_accuracy": 1.0 - spec.p_e}


def sigma_for_target_r2(r2: float) -> float:
    """
    Noise level whose regression problem has best classic R² ``r2``.

    Raises:
        ValueError: If r2 is outside (0, 1)
    """
    if not 0.0 < r2 < 1.0:
        raise ValueError(f"Target R² must lie in (0, 1), got {r2}")
    return math.sqrt(1.0 / r2 - 1.0)


def recovery_grid(
    f_ids: Iterable[str],
    dims: Iterable[int],
    noises: Iterable[float],
    classification: bool = False,
    repetitions: int = 10,
    seed: int = 0,
    cfg: Optional[SolverConfig] = None,
) -> List[RecoveryCell]:
    """
    Compare estimated and true achievable metrics over a grid of problems.

    Args:
        f_ids: Function identifiers
        dims: Input dimensions
        noises: sigma values (regression) or p_e values (classification)
        classification: Whether ``noises`` are label-flip probabilities
        repetitions: Noise repetitions per cell, sharing the same inputs
        seed: Input seed
        cfg: Solver settings

    Returns:
        List[RecoveryCell]: One cell per (function, dimension, noise)
    """
    service = ValuationService(cfg)
    cells = []
    for f_id in f_ids:
        for d in dims:
            for noise in noises:
                kind = {"p_e": noise} if classification else {"sigma": noise}
                estimates: Dict[str, List[float]] = {}
                truth = ground_truth(SynthSpec(f_id=f_id, d=d, seed=seed, **kind))
                for repetition in range(repetitions):
                    spec = SynthSpec(
                        f_id=f_id, d=d, seed=seed, repetition=repetition, **kind
                    )
                    dataset = generate(spec)
                    performance = service.value(dataset, dataset.feature_names)
                    for name in truth:
                        estimates.setdefault(name, []).append(getattr(performance, name))
                metrics = {
                    name: (
                        truth[name],
                        float(np.mean(values)),
                        float(np.std(values, ddof=1)) if len(values) > 1 else 0.0,
                    )
                    for name, values in estimates.items()
                }
                logger.info(f"{f_id} d={d} noise={noise}: {metrics}")
                cells.append(
                    RecoveryCell(
                        f_id=f_id,
                        d=d,
                        noise=noise,
                        repetitions=repetitions,
                        metrics=metrics,
                    )
                )
    return cells


def simulate_training_runs(
    n_runs: int = 100,
    best_value: float = 0.82,
    overfit_share: float = 0.76,
    epochs: int = 100,
    seed: int = 0,
) -> List[RunRecord]:
    """
    Synthetic accuracy curves of training runs, for monitor studies.

    A share of the runs overshoots the achievable best on the training set
    and then overfits (their holdout accuracy peaks below the best and decays);
    the others converge below the best with a small train/holdout gap.

    Args:
        n_runs: Number of runs
        best_value: Achievable best accuracy
        overfit_share: Share of overshooting runs
        epochs: Epochs per run
        seed: Seed of the run stream

    Returns:
        List[RunRecord]: Runs without ``terminated_at``
    """
    if not 0.0 <= overfit_share <= 1.0:
        raise ValueError("overfit_share must lie in [0, 1]")
    rng = _rng(seed, STREAM_RUNS)
    n_overshoot = int(round(overfit_share * n_runs))
    overshoots = rng.permutation(np.arange(n_runs) < n_overshoot)
    t = np.arange(1, epochs + 1, dtype=np.float64)
    start = 0.5

    runs = []
    for number, overshoot in enumerate(overshoots):
        if overshoot:
            ceiling = 0.99
            tau = rng.uniform(8.0, 15.0)
            train = ceiling - (ceiling - start) * np.exp(-t / tau)
            peak = best_value - 0.04
            final = best_value - 0.17
            t_peak = 2.0 * tau
            progress = (t - t_peak) / max(epochs - t_peak, 1.0)
            decay = (peak - final) * np.clip(progress, 0.0, 1.0)
            holdout = np.minimum(train, peak) - decay
        else:
            ceiling = rng.uniform(best_value - 0.12, best_value - 0.02)
            tau = rng.uniform(10.0, 25.0)
            train = ceiling - (ceiling - start) * np.exp(-t / tau)
            holdout = train - rng.uniform(0.0, 0.03)

        runs.append(
            RunRecord(
                run_id=f"run-{number:03d}",
                epochs=tuple(
                    EpochRecord(index=i + 1, train_metric=float(a), holdout_metric=float(b))
                    for i, (a, b) in enumerate(zip(train, holdout))
                ),
                final_train=float(train[-1]),
                final_holdout=float(holdout[-1]),
            )
        )
    return runs
