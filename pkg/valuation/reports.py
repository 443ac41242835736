"""
Command reports.
Every command builds a Report and renders it twice: aligned text tables for
people (4 significant digits) and JSON lines for tools (full precision, sorted
keys), both from the same values.
"""

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

MISSING = "-"


def _clean(value: Any) -> Any:
    """Convert numpy scalars and enums to JSON-ready values; non-finite floats become None."""
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    return value


def format_cell(value: Any) -> str:
    """Text rendering of one table cell."""
    value = _clean(value)
    if value is None:
        return MISSING
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return f"{value:.4g}"
    if isinstance(value, list):
        return ",".join(str(v) for v in value)
    return str(value)


@dataclass
class Table:
    name: str
    columns: List[str]
    rows: List[Dict[str, Any]] = field(default_factory=list)

    def to_text(self) -> str:
        cells = [[format_cell(row.get(column)) for column in self.columns] for row in self.rows]
        widths = [
            max([len(column)] + [len(line[i]) for line in cells])
            for i, column in enumerate(self.columns)
        ]
        lines = [
            f"[{self.name}]",
            "  ".join(column.ljust(widths[i]) for i, column in enumerate(self.columns)),
            "  ".join("-" * width for width in widths),
        ]
        for line in cells:
            lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(line)))
        return "\n".join(line.rstrip() for line in lines)


@dataclass
class Report:
    """Result of one command, renderable as text or JSON lines."""

    command: str
    arguments: Dict[str, Any] = field(default_factory=dict)
    dataset: Optional[Dict[str, Any]] = None
    tables: List[Table] = field(default_factory=list)
    messages: List[str] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def add_table(
        self, name: str, rows: Sequence[Dict[str, Any]], columns: Optional[List[str]] = None
    ) -> Table:
        rows = list(rows)
        if columns is None:
            columns = list(rows[0].keys()) if rows else []
        table = Table(name=name, columns=columns, rows=rows)
        self.tables.append(table)
        return table

    def to_records(self) -> List[Dict[str, Any]]:
        records: List[Dict[str, Any]] = [
            {"record": "command", "command": self.command, "arguments": self.arguments}
        ]
        if self.dataset is not None:
            records.append({"record": "dataset", **self.dataset})
        for table in self.tables:
            for row in table.rows:
                records.append({"record": table.name, **row})
        for message in self.messages:
            records.append({"record": "message", "text": message})
        if self.metadata:
            records.append({"record": "metadata", **self.metadata})
        return [_clean(record) for record in records]

    def to_json_lines(self) -> str:
        return "".join(
            json.dumps(record, sort_keys=True, allow_nan=False) + "\n"
            for record in self.to_records()
        )

    def to_text(self) -> str:
        blocks = [f"leanviz {self.command}"]
        if self.dataset is not None:
            blocks.append(
                "dataset: "
                + ", ".join(f"{key}={format_cell(value)}" for key, value in self.dataset.items())
            )
        blocks.extend(table.to_text() for table in self.tables)
        blocks.extend(self.messages)
        return "\n\n".join(blocks) + "\n"
