"""
Base classes and interfaces for valuation services.
Defines the exception hierarchy shared by all services and the contract every
copula-entropy estimator implements.
"""

from abc import ABC, abstractmethod
from typing import Any, Optional

import numpy as np


class LeanVizError(Exception):
    """Base exception for all valuation errors."""

    def __init__(
        self,
        message: str,
        source: Optional[str] = None,
        original_error: Optional[Exception] = None,
    ):
        self.message = message
        self.source = source
        self.original_error = original_error
        super().__init__(f"{source + ': ' if source else ''}{message}")


class DataError(LeanVizError):
    """Raised when a dataset cannot be ingested or violates its schema."""

    pass


class SchemaError(DataError):
    """Raised on unknown columns, bad type declarations or ragged files."""

    pass


class ConstantColumnError(DataError):
    """Raised when a column that must vary is constant."""

    def __init__(self, column: str, **kwargs):
        self.column = column
        super().__init__(f"Column '{column}' is constant", **kwargs)


class InsufficientRowsError(DataError):
    """Raised when too few rows remain for an estimator."""

    pass


class EstimationError(LeanVizError):
    """Base exception for estimator failures."""

    pass


class SolverNonConvergenceError(EstimationError):
    """Raised when the dual solver exhausts its iteration budget."""

    def __init__(
        self,
        message: str,
        best_theta: Optional[np.ndarray] = None,
        best_objective: Optional[float] = None,
        **kwargs,
    ):
        self.best_theta = best_theta
        self.best_objective = best_objective
        super().__init__(message, **kwargs)


class DimensionBudgetError(EstimationError):
    """Raised when a copula is too wide for the quadrature budget."""

    pass


class InsufficientDataError(EstimationError):
    """Raised when conditional blocks stay too small even after pooling."""

    pass


class ProtocolError(LeanVizError):
    """Raised on malformed monitor protocol lines or run records."""

    pass


class ConfigurationError(LeanVizError):
    """Raised when a configuration file or flag value is invalid."""

    pass


class CopulaEntropyEstimator(ABC):
    """Base abstract class for copula-entropy estimators."""

    method: str = ""

    @abstractmethod
    def copula_entropy(self, values: np.ndarray) -> float:
        """
        Estimate the entropy of the copula of a copula-uniform sample.

        Args:
            values: n x d matrix of copula-uniform cells (d >= 2)

        Returns:
            float: Copula entropy in nats (always <= 0)

        Raises:
            EstimationError: If the estimate cannot be produced
        """
        pass

    def metadata(self) -> dict[str, Any]:
        """
        Describe the estimator for report metadata.

        Returns:
            dict[str, Any]: Estimator name and settings
        """
        return {"method": self.method}
