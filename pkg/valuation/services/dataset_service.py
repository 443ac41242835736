"""
Dataset ingestion service.
Loads comma-separated files into typed, immutable datasets and derives
column subsets and re-targeted views for the downstream estimators.
"""

import logging
import math
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from valuation.services.base import DataError, SchemaError
from valuation.services.models.data_models import (
    ColumnKind,
    ColumnSchema,
    Dataset,
    IngestConfig,
)

logger = logging.getLogger(__name__)

# Cell values treated as missing (case-insensitive, after stripping).
MISSING_TOKENS = frozenset({"", "na", "n/a", "nan", "null", "none"})

# Minimum distinct numeric values for a column to be typed continuous.
MIN_CONTINUOUS_CARDINALITY = 20


def continuous_cardinality_threshold(n: int) -> float:
    """Distinct-value count a numeric column must exceed to be typed continuous."""
    return max(MIN_CONTINUOUS_CARDINALITY, math.sqrt(n))


class DatasetService:
    """Service for loading and reshaping datasets."""

    def load_csv(
        self, path: Union[str, Path], config: Optional[IngestConfig] = None
    ) -> Dataset:
        """
        Load a CSV file with a header row into a typed dataset.

        Args:
            path: Path of the CSV file
            config: Typing overrides, target and row limit

        Returns:
            Dataset: Typed dataset; ``dropped_rows`` reports listwise deletions

        Raises:
            DataError: If the file cannot be read or every row is dropped
            SchemaError: On ragged rows, unknown or ill-typed declared columns
        """
        config = config or IngestConfig()
        try:
            frame = pd.read_csv(
                path,
                dtype=str,
                keep_default_na=False,
                nrows=config.max_rows,
                encoding="utf-8",
                skipinitialspace=True,
            )
        except FileNotFoundError as e:
            raise DataError(f"File not found: {path}", source="load_csv", original_error=e)
        except (pd.errors.ParserError, UnicodeDecodeError) as e:
            raise SchemaError(
                f"Malformed CSV {path}: {str(e)}", source="load_csv", original_error=e
            )
        except (OSError, pd.errors.EmptyDataError) as e:
            raise DataError(
                f"Cannot read {path}: {str(e)}", source="load_csv", original_error=e
            )

        # With keep_default_na=False only short rows produce NaN cells
        if frame.isna().to_numpy().any():
            raise SchemaError(f"Ragged rows in {path}", source="load_csv")

        return self.from_frame(frame, config)

    def from_frame(self, frame: pd.DataFrame, config: IngestConfig) -> Dataset:
        """
        Type, clean and encode a frame of raw string cells.

        Args:
            frame: Raw cells as strings, one column per variable
            config: Typing overrides and target

        Returns:
            Dataset: Typed dataset
        """
        names = [str(name).strip() for name in frame.columns]
        frame = frame.copy()
        frame.columns = names

        declared = set(config.categorical) | set(config.continuous)
        unknown = sorted(declared - set(names))
        if unknown:
            raise SchemaError(f"Unknown declared columns: {unknown}", source="load_csv")
        overlap = sorted(set(config.categorical) & set(config.continuous))
        if overlap:
            raise SchemaError(
                f"Columns declared both categorical and continuous: {overlap}",
                source="load_csv",
            )

        target = config.target or names[-1]
        if target not in names:
            raise SchemaError(f"Target '{target}' is not a column", source="load_csv")

        cells = frame.apply(lambda column: column.str.strip())
        missing = cells.apply(lambda column: column.str.lower().isin(MISSING_TOKENS))

        # Parse every column once; non-parsable cells become NaN
        numeric = cells.apply(pd.to_numeric, errors="coerce")
        non_finite = ~np.isfinite(numeric.to_numpy(dtype=float))

        kinds: Dict[str, ColumnKind] = {}
        for name in names:
            if name in config.categorical:
                kinds[name] = ColumnKind.CATEGORICAL
            elif name in config.continuous:
                bad = (~missing[name]) & numeric[name].isna()
                if bad.any():
                    example = cells[name][bad].iloc[0]
                    raise SchemaError(
                        f"Continuous column '{name}' has non-numeric cell '{example}'",
                        source="load_csv",
                    )
                kinds[name] = ColumnKind.CONTINUOUS

        # Listwise deletion: missing cells anywhere, non-finite continuous cells
        drop = missing.any(axis=1).to_numpy()
        for position, name in enumerate(names):
            if kinds.get(name) == ColumnKind.CONTINUOUS:
                drop |= non_finite[:, position]
        dropped = int(drop.sum())
        if dropped == len(cells):
            raise DataError("All rows were dropped as incomplete", source="load_csv")
        if dropped:
            logger.warning(f"Dropped {dropped} incomplete rows out of {len(cells)}")

        kept = cells.loc[~drop].reset_index(drop=True)
        kept_numeric = numeric.loc[~drop].reset_index(drop=True)
        n = len(kept)

        for name in names:
            if name in kinds:
                continue
            parsed = kept_numeric[name]
            if parsed.notna().all() and np.isfinite(parsed.to_numpy()).all():
                distinct = parsed.nunique()
                if distinct > continuous_cardinality_threshold(n):
                    kinds[name] = ColumnKind.CONTINUOUS
                    continue
            kinds[name] = ColumnKind.CATEGORICAL

        columns: Dict[str, np.ndarray] = {}
        labels: Dict[str, tuple] = {}
        schemas: List[ColumnSchema] = []
        for name in names:
            if kinds[name] == ColumnKind.CONTINUOUS:
                columns[name] = kept_numeric[name].to_numpy(dtype=np.float64)
            else:
                codes, uniques = pd.factorize(kept[name], sort=False)
                columns[name] = codes.astype(np.int64)
                labels[name] = tuple(str(label) for label in uniques)
            schemas.append(ColumnSchema(name=name, kind=kinds[name]))

        if n < 2:
            raise DataError(f"Only {n} complete row(s) remain", source="load_csv")

        logger.info(
            f"Loaded {n} rows, {len(names) - 1} features, target '{target}' "
            f"({kinds[target].value})"
        )
        return Dataset(
            schemas=tuple(schemas),
            columns=columns,
            target=target,
            labels=labels,
            dropped_rows=dropped,
        )

    def from_arrays(
        self,
        columns: Mapping[str, Sequence],
        target: str,
        categorical: Iterable[str] = (),
    ) -> Dataset:
        """
        Build a dataset from in-memory columns.

        Args:
            columns: Column name to values, in schema order
            target: Target column name
            categorical: Names of categorical columns (values are re-coded)

        Returns:
            Dataset: Typed dataset
        """
        categorical = set(categorical)
        arrays: Dict[str, np.ndarray] = {}
        labels: Dict[str, tuple] = {}
        schemas: List[ColumnSchema] = []
        for name, values in columns.items():
            if name in categorical:
                codes, uniques = pd.factorize(pd.Series(list(values)), sort=False)
                arrays[name] = codes.astype(np.int64)
                labels[name] = tuple(str(label) for label in uniques)
                schemas.append(ColumnSchema(name=name, kind=ColumnKind.CATEGORICAL))
            else:
                arrays[name] = np.asarray(values, dtype=np.float64).copy()
                schemas.append(ColumnSchema(name=name, kind=ColumnKind.CONTINUOUS))
        return Dataset(
            schemas=tuple(schemas), columns=arrays, target=target, labels=labels
        )

    def subset(self, dataset: Dataset, columns: Iterable[str]) -> Dataset:
        """
        Keep the named feature columns plus the target, in schema order.

        Args:
            dataset: Source dataset
            columns: Feature names to keep (the target is kept implicitly)

        Returns:
            Dataset: Dataset restricted to the named features

        Raises:
            SchemaError: If a name is not a column of the dataset
        """
        wanted = set(columns)
        unknown = sorted(wanted - set(dataset.names))
        if unknown:
            raise SchemaError(f"Unknown columns: {unknown}", source="subset")
        wanted.add(dataset.target)
        schemas = tuple(s for s in dataset.schemas if s.name in wanted)
        return Dataset(
            schemas=schemas,
            columns={s.name: dataset.columns[s.name] for s in schemas},
            target=dataset.target,
            labels={k: v for k, v in dataset.labels.items() if k in wanted},
            dropped_rows=dataset.dropped_rows,
        )

    def retarget(
        self,
        dataset: Dataset,
        name: str,
        values: Sequence,
        kind: ColumnKind = ColumnKind.CONTINUOUS,
    ) -> Dataset:
        """
        Replace the target with a new column, keeping every feature.

        Used to value model predictions or regression residuals against the
        same explanatory variables.

        Args:
            dataset: Source dataset
            name: Name of the new target column
            values: New target values, aligned with the rows
            kind: Statistical type of the new target

        Returns:
            Dataset: Dataset whose target is the new column

        Raises:
            SchemaError: On misaligned values or a clashing name
        """
        values = np.asarray(values)
        if len(values) != dataset.n:
            raise SchemaError(
                f"New target has {len(values)} rows, dataset has {dataset.n}",
                source="retarget",
            )
        if name in dataset.feature_names:
            raise SchemaError(f"Column '{name}' already exists", source="retarget")

        columns = {f: dataset.columns[f] for f in dataset.feature_names}
        schemas = [s for s in dataset.schemas if s.name != dataset.target]
        labels = {k: v for k, v in dataset.labels.items() if k != dataset.target}
        if kind == ColumnKind.CATEGORICAL:
            codes, uniques = pd.factorize(pd.Series(list(values)), sort=False)
            columns[name] = codes.astype(np.int64)
            labels[name] = tuple(str(label) for label in uniques)
        else:
            columns[name] = values.astype(np.float64).copy()
        schemas.append(ColumnSchema(name=name, kind=kind))
        return Dataset(
            schemas=tuple(schemas),
            columns=columns,
            target=name,
            labels=labels,
            dropped_rows=dataset.dropped_rows,
        )

    def to_frame(self, dataset: Dataset) -> pd.DataFrame:
        """
        Render a dataset back to a frame, decoding categorical columns.

        Args:
            dataset: Dataset to render

        Returns:
            pd.DataFrame: One column per schema entry
        """
        data = {}
        for schema in dataset.schemas:
            values = dataset.columns[schema.name]
            if schema.is_categorical:
                data[schema.name] = dataset.decode(schema.name, values)
            else:
                data[schema.name] = values
        return pd.DataFrame(data, columns=dataset.names)
