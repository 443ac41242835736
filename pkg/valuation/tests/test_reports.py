import json
import unittest

import numpy as np

from valuation.reports import MISSING, Report, format_cell
from valuation.services.models.data_models import StopReason


class FormatCellTests(unittest.TestCase):
    def test_values(self):
        self.assertEqual(format_cell(0.123456), "0.1235")
        self.assertEqual(format_cell(np.float64(2.0)), "2")
        self.assertEqual(format_cell(np.int64(3)), "3")
        self.assertEqual(format_cell(None), MISSING)
        self.assertEqual(format_cell(float("nan")), MISSING)
        self.assertEqual(format_cell(True), "yes")
        self.assertEqual(format_cell(["a", "b"]), "a,b")
        self.assertEqual(format_cell(StopReason.CAPACITY), "capacity")


class ReportTests(unittest.TestCase):
    """Tests for Report rendering."""

    def setUp(self):
        self.report = Report(
            command="value",
            arguments={"features": ["x1"], "seed": 0},
            dataset={"n": 100, "target": "y"},
        )
        self.report.add_table(
            "valuation",
            [{"features": ["x1"], "mi": np.float64(0.5), "best_accuracy": None}],
        )
        self.report.messages.append("estimate is degenerate")
        self.report.metadata["method"] = "mind_dual"

    def test_json_lines(self):
        records = [json.loads(line) for line in self.report.to_json_lines().splitlines()]
        self.assertEqual(
            [record["record"] for record in records],
            ["command", "dataset", "valuation", "message", "metadata"],
        )
        self.assertEqual(records[2]["mi"], 0.5)
        self.assertIsNone(records[2]["best_accuracy"])
        self.assertEqual(records[3]["text"], "estimate is degenerate")

    def test_json_keys_are_sorted(self):
        first_line = self.report.to_json_lines().splitlines()[0]
        self.assertEqual(
            first_line,
            json.dumps(
                {"arguments": {"features": ["x1"], "seed": 0}, "command": "value", "record": "command"}
            ),
        )

    def test_non_finite_values_become_null(self):
        report = Report(command="value")
        report.add_table("valuation", [{"mi": float("inf")}])
        record = json.loads(report.to_json_lines().splitlines()[1])
        self.assertIsNone(record["mi"])

    def test_text(self):
        text = self.report.to_text()
        self.assertTrue(text.startswith("leanviz value\n"))
        self.assertIn("dataset: n=100, target=y", text)
        self.assertIn("[valuation]", text)
        self.assertIn("0.5", text)
        self.assertIn(MISSING, text)
        self.assertTrue(text.endswith("estimate is degenerate\n"))

    def test_table_columns_are_aligned(self):
        report = Report(command="select")
        report.add_table("trace", [{"variable": "x1", "mi": 0.1}, {"variable": "long_name", "mi": 1.0}])
        lines = report.tables[0].to_text().splitlines()
        self.assertEqual(lines[0], "[trace]")
        self.assertEqual(lines[1].index("mi"), lines[3].index("0.1"))
        self.assertEqual(lines[1].index("mi"), lines[4].index("1"))

    def test_empty_table(self):
        report = Report(command="select")
        table = report.add_table("underused", [], columns=["variable", "shift"])
        self.assertEqual(table.to_text().splitlines()[1].split(), ["variable", "shift"])
        self.assertEqual(report.to_records()[1:], [])
