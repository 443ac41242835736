"""
Max-entropy copula entropy estimation through the Donsker-Varadhan dual.

For a statistics function phi, the copula entropy estimate is

    inf_theta  -<theta, E_data[phi(u)]> + log mean_{u in Q} exp(<theta, phi(u)>)

where Q is a scrambled Sobol point set on [0, 1]^d standing in for the
uniform integral. The objective is convex and smooth, so it is minimized with
L-BFGS from theta = 0. Its value is minus the KL divergence between the
max-entropy copula and the uniform distribution, hence never positive.
"""

import logging
import math
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
from scipy import optimize
from scipy.special import logsumexp, softmax
from scipy.stats import qmc

from valuation.services.base import (
    CopulaEntropyEstimator,
    DimensionBudgetError,
    EstimationError,
    InsufficientRowsError,
    SolverNonConvergenceError,
)
from valuation.services.copula import feature_map, feature_moments
from valuation.services.models.data_models import (
    CopulaSample,
    DualSolution,
    FeatureMapKind,
    FeatureMapSpec,
    SolverConfig,
)

logger = logging.getLogger(__name__)

MAX_DIMENSION = 12
MIN_ROWS = 50

# Entropies below this fraction of the floor are flagged near-degenerate, and an
# unfinished descent that got there is treated as a diverging dual (moments
# outside the quadrature hull), not as a failure.
DIVERGENCE_FRACTION = 0.5

# Relative eigenvalue below which a whitened direction is dropped.
RANK_TOLERANCE = 1e-10


class _EntropyFloorReached(Exception):
    def __init__(self, theta: np.ndarray, value: float):
        self.theta = theta
        self.value = value


@lru_cache(maxsize=16)
def sobol_points(dimension: int, points: int, seed: int) -> np.ndarray:
    """
    Scrambled Sobol point set on the open unit hypercube.

    Args:
        dimension: Number of coordinates
        points: Number of points (powers of 2 keep the balance properties)
        seed: Scrambling seed

    Returns:
        np.ndarray: Read-only points x dimension array
    """
    sampler = qmc.Sobol(d=dimension, scramble=True, seed=seed)
    exponent = int(round(math.log2(points)))
    if 2**exponent == points:
        grid = sampler.random_base2(m=exponent)
    else:
        grid = sampler.random(points)
    edge = 0.5 / points
    grid = np.clip(grid, edge, 1.0 - edge)
    grid.flags.writeable = False
    return grid


@lru_cache(maxsize=16)
def _quadrature_basis(
    kind: FeatureMapKind, dimension: int, points: int, seed: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Quadrature features centred and whitened under the uniform measure.

    Returns the whitened points x r features, the uniform mean of phi and the
    m x r map W with whitened = (phi - mean) @ W. Directions along which phi is
    constant on the quadrature are dropped, so r <= m. The dual value is
    unchanged by this reparametrization; theta = W @ theta_whitened.
    """
    features = feature_map(
        sobol_points(dimension, points, seed), FeatureMapSpec(kind, dimension)
    )
    mean = features.mean(axis=0)
    centred = features - mean
    eigenvalues, eigenvectors = np.linalg.eigh(centred.T @ centred / len(centred))
    keep = eigenvalues > RANK_TOLERANCE * eigenvalues.max()
    transform = eigenvectors[:, keep] / np.sqrt(eigenvalues[keep])
    whitened = centred @ transform
    for array in (whitened, mean, transform):
        array.flags.writeable = False
    return whitened, mean, transform


def _objective(
    theta: np.ndarray, sample_moments: np.ndarray, features: np.ndarray
) -> Tuple[float, np.ndarray]:
    logits = features @ theta
    value = -float(theta @ sample_moments) + float(
        logsumexp(logits) - math.log(len(logits))
    )
    gradient = -sample_moments + softmax(logits) @ features
    return value, gradient


def dual_objective(
    theta: np.ndarray,
    sample_moments: np.ndarray,
    quadrature: np.ndarray,
    spec: FeatureMapSpec,
) -> Tuple[float, np.ndarray]:
    """
    Value and gradient of the discretized max-entropy dual.

    Args:
        theta: Natural parameters, length spec.size
        sample_moments: Empirical mean of phi over the data
        quadrature: Nonempty point set on [0, 1]^d
        spec: Feature map specification

    Returns:
        Tuple[float, np.ndarray]: Objective value and its exact gradient

    Raises:
        ValueError: On length mismatches, empty quadrature or non-finite inputs
    """
    theta = np.asarray(theta, dtype=np.float64)
    sample_moments = np.asarray(sample_moments, dtype=np.float64)
    if theta.shape != (spec.size,) or sample_moments.shape != (spec.size,):
        raise ValueError(f"theta and moments must have length {spec.size}")
    if len(quadrature) == 0:
        raise ValueError("Quadrature point set is empty")
    if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(sample_moments))):
        raise ValueError("theta and moments must be finite")
    return _objective(theta, sample_moments, feature_map(quadrature, spec))


def copula_entropy_mind(
    sample: CopulaSample,
    spec: FeatureMapSpec,
    cfg: Optional[SolverConfig] = None,
) -> Tuple[float, DualSolution]:
    """
    Max-entropy estimate of the entropy of a copula.

    Args:
        sample: Copula-uniform sample (n >= 50, width <= 12)
        spec: Feature map specification matching the sample width
        cfg: Solver settings

    Returns:
        Tuple[float, DualSolution]: Entropy in nats (<= 0, floored at
        cfg.min_entropy) and the dual solution

    Raises:
        DimensionBudgetError: If the sample is wider than the quadrature budget
        InsufficientRowsError: If the sample has fewer than 50 rows
        SolverNonConvergenceError: If the descent exhausts cfg.max_iters
    """
    cfg = cfg or SolverConfig()
    d = sample.width
    if d > MAX_DIMENSION:
        raise DimensionBudgetError(
            f"Copula of width {d} exceeds the budget of {MAX_DIMENSION}",
            source="copula_entropy_mind",
        )
    if sample.n < MIN_ROWS:
        raise InsufficientRowsError(
            f"Copula entropy needs {MIN_ROWS} rows, got {sample.n}",
            source="copula_entropy_mind",
        )
    if d < 2:
        return 0.0, DualSolution(
            theta=np.zeros(0),
            objective=0.0,
            gradient_norm=0.0,
            iterations=0,
            quadrature_points=0,
        )

    features, mean, transform = _quadrature_basis(
        spec.kind, d, cfg.quadrature_points, cfg.seed
    )
    moments = (feature_moments(sample, spec) - mean) @ transform
    start = np.zeros(transform.shape[1])
    best = {"theta": start, "value": 0.0}

    def fun(theta: np.ndarray) -> Tuple[float, np.ndarray]:
        value, gradient = _objective(theta, moments, features)
        if value < best["value"]:
            best["theta"], best["value"] = theta.copy(), value
        if value <= cfg.min_entropy:
            raise _EntropyFloorReached(theta.copy(), value)
        return value, gradient

    try:
        result = optimize.minimize(
            fun,
            start,
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": cfg.max_iters, "gtol": cfg.grad_tol, "ftol": 1e-14},
        )
    except _EntropyFloorReached as floor:
        logger.warning(
            f"Copula entropy of {sample.source_columns} reached the floor "
            f"{cfg.min_entropy}; dependence is near-deterministic"
        )
        return cfg.min_entropy, DualSolution(
            theta=transform @ floor.theta,
            objective=cfg.min_entropy,
            gradient_norm=float("nan"),
            iterations=-1,
            quadrature_points=cfg.quadrature_points,
            degenerate=True,
        )

    value, gradient = _objective(result.x, moments, features)
    gradient_norm = float(np.max(np.abs(gradient)))
    logger.debug(
        f"Dual solve on {sample.source_columns}: objective={value:.6f} "
        f"|grad|={gradient_norm:.2e} iterations={result.nit} status={result.status}"
    )

    if not result.success and gradient_norm > 1e3 * cfg.grad_tol:
        if best["value"] <= DIVERGENCE_FRACTION * cfg.min_entropy:
            logger.warning(
                f"Dual on {sample.source_columns} is diverging "
                f"(objective {best['value']:.3f}); clamping to {cfg.min_entropy}"
            )
            return cfg.min_entropy, DualSolution(
                theta=transform @ best["theta"],
                objective=cfg.min_entropy,
                gradient_norm=gradient_norm,
                iterations=int(result.nit),
                quadrature_points=cfg.quadrature_points,
                degenerate=True,
            )
        raise SolverNonConvergenceError(
            f"Dual solver did not converge after {result.nit} iterations: "
            f"{result.message}",
            best_theta=transform @ best["theta"],
            best_objective=best["value"],
            source="copula_entropy_mind",
        )

    entropy = min(value, 0.0)
    return entropy, DualSolution(
        theta=transform @ result.x,
        objective=entropy,
        gradient_norm=gradient_norm,
        iterations=int(result.nit),
        quadrature_points=cfg.quadrature_points,
        degenerate=entropy <= DIVERGENCE_FRACTION * cfg.min_entropy,
    )


class MindCopulaEstimator(CopulaEntropyEstimator):
    """Copula entropies through the max-entropy dual with a frozen feature map."""

    method = "mind_dual"

    def __init__(self, cfg: Optional[SolverConfig] = None):
        self.cfg = cfg or SolverConfig()
        self.degenerate = False
        self.last_solution: Optional[DualSolution] = None

    def copula_entropy(self, values: np.ndarray) -> float:
        """
        Estimate the copula entropy of an already rank-transformed block.

        Args:
            values: n x d copula-uniform matrix

        Returns:
            float: Entropy in nats
        """
        if not np.all(np.isfinite(values)):
            raise EstimationError("Copula cells must be finite", source=self.method)
        sample = CopulaSample(
            values=values, source_columns=tuple(f"u{j}" for j in range(values.shape[1]))
        )
        entropy, solution = copula_entropy_mind(
            sample, FeatureMapSpec(self.cfg.feature_map, sample.width), self.cfg
        )
        self.last_solution = solution
        self.degenerate = self.degenerate or solution.degenerate
        return entropy

    def metadata(self) -> dict:
        return {
            "method": self.method,
            "feature_map": self.cfg.feature_map.value,
            "quadrature_points": self.cfg.quadrature_points,
            "seed": self.cfg.seed,
        }
