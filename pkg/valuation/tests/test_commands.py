"""
End-to-end tests of the leanviz management commands.
"""

import json
import shutil
import tempfile
from io import StringIO
from pathlib import Path

import numpy as np
import pandas as pd
from django.core.cache import cache
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from valuation.management.commands.improve import (
    IMPROVE_MODEL,
    LIKELY_OVERFIT,
    SEEK_NEW_VARIABLES,
    recommendation,
)
from valuation.services.synthbench import sigma_for_target_r2


def records(output):
    return [json.loads(line) for line in output.splitlines()]


def of_kind(lines, kind):
    return [record for record in lines if record["record"] == kind]


class CommandTestCase(SimpleTestCase):
    """Shared fixtures: a temporary directory with a small regression CSV."""

    def setUp(self):
        cache.clear()
        self.tmp = Path(tempfile.mkdtemp())
        self.addCleanup(shutil.rmtree, self.tmp)
        rng = np.random.default_rng(0)
        x1, x2, x3, noise = rng.normal(size=(4, 500))
        self.signal = x1 + x2
        self.frame = pd.DataFrame(
            {"x1": x1, "x2": x2, "x3": x3, "y": self.signal + 0.5 * noise}
        )
        self.data = self.write_frame("data.csv", self.frame)

    def tearDown(self):
        cache.clear()

    def write_frame(self, name, frame):
        path = self.tmp / name
        frame.to_csv(path, index=False)
        return str(path)

    def call(self, name, **options):
        out = StringIO()
        call_command(name, stdout=out, **options)
        return out.getvalue()


class ValueCommandTests(CommandTestCase):
    """Tests for the value command."""

    def test_json_report(self):
        lines = records(self.call("value", data=self.data, json=True, seed=0))
        self.assertEqual(lines[0]["record"], "command")
        self.assertEqual(lines[0]["arguments"]["seed"], 0)
        dataset = of_kind(lines, "dataset")[0]
        self.assertEqual(dataset["n"], 500)
        self.assertEqual(dataset["target"], "y")

        row = of_kind(lines, "valuation")[0]
        self.assertEqual(row["features"], ["x1", "x2", "x3"])
        self.assertGreater(row["mi"], 0.5)
        self.assertGreater(row["best_r2"], 0.7)
        self.assertIsNone(row["best_accuracy"])
        self.assertEqual(of_kind(lines, "metadata")[0]["method"], "mind_dual")

    def test_text_report(self):
        text = self.call("value", data=self.data, features="x1")
        self.assertTrue(text.startswith("leanviz value\n"))
        self.assertIn("[valuation]", text)
        self.assertIn("best_r2", text)

    def test_empty_feature_list(self):
        lines = records(self.call("value", data=self.data, features="", json=True))
        row = of_kind(lines, "valuation")[0]
        self.assertEqual(row["mi"], 0.0)
        self.assertEqual(row["best_r2"], 0.0)

    def test_output_is_deterministic(self):
        first = self.call("value", data=self.data, json=True, seed=3)
        cache.clear()
        second = self.call("value", data=self.data, json=True, seed=3)
        self.assertEqual(first, second)

    def test_out_file(self):
        out = self.tmp / "report.jsonl"
        text = self.call("value", data=self.data, features="x1", out=str(out))
        self.assertIn("leanviz value", text)
        self.assertEqual(records(out.read_text())[0]["command"], "value")

    def test_config_file_and_flag_precedence(self):
        config = self.tmp / "leanviz.env"
        config.write_text("target=x3\nmethod=gaussian\n")
        lines = records(self.call("value", data=self.data, config=str(config), json=True))
        self.assertEqual(of_kind(lines, "dataset")[0]["target"], "x3")
        self.assertEqual(of_kind(lines, "metadata")[0]["method"], "gaussian_copula")

        lines = records(
            self.call("value", data=self.data, config=str(config), target="y", json=True)
        )
        self.assertEqual(of_kind(lines, "dataset")[0]["target"], "y")

    def test_data_errors_exit_2(self):
        cases = [
            {},
            {"data": str(self.tmp / "missing.csv")},
            {"data": self.data, "target": "nope"},
            {"data": self.data, "features": "nope"},
        ]
        for options in cases:
            with self.subTest(options=options):
                with self.assertRaises(CommandError) as context:
                    self.call("value", **options)
                self.assertEqual(context.exception.returncode, 2)

    def test_invalid_config_exits_2(self):
        config = self.tmp / "bad.env"
        config.write_text("colour=red\n")
        with self.assertRaises(CommandError) as context:
            self.call("value", data=self.data, config=str(config))
        self.assertEqual(context.exception.returncode, 2)

    def test_classification_target(self):
        frame = self.frame.assign(y=np.where(self.frame["y"] > 0, "pos", "neg"))
        data = self.write_frame("labels.csv", frame)
        lines = records(self.call("value", data=data, json=True))
        row = of_kind(lines, "valuation")[0]
        self.assertGreater(row["best_accuracy"], 0.8)
        self.assertIsNone(row["best_rmse"])
        self.assertIsNotNone(row["hellman_raviv_lower"])


class SelectCommandTests(CommandTestCase):
    """Tests for the select command."""

    def test_trace(self):
        lines = records(self.call("select", data=self.data, fraction=1.0, json=True))
        rows = of_kind(lines, "selection")
        self.assertEqual(rows[0]["variable"], "No Variable")
        self.assertEqual(rows[0]["selection_order"], 0)
        self.assertEqual({row["variable"] for row in rows[1:3]}, {"x1", "x2"})
        self.assertEqual(rows[-1]["variable"], "x3")
        self.assertNotIn("running_achievable_accuracy", rows[0])
        self.assertEqual(of_kind(lines, "metadata")[0]["stop_reason"], "exhausted")

    def test_capacity(self):
        lines = records(self.call("select", data=self.data, capacity=1, json=True))
        self.assertEqual(len(of_kind(lines, "selection")), 2)
        self.assertEqual(of_kind(lines, "metadata")[0]["stop_reason"], "capacity")

    def test_invalid_fraction(self):
        with self.assertRaises(CommandError) as context:
            self.call("select", data=self.data, fraction=1.5)
        self.assertEqual(context.exception.returncode, 2)


class ImproveCommandTests(CommandTestCase):
    """Tests for the improve command."""

    def test_recommendation(self):
        self.assertEqual(recommendation(0.01, 0.02), SEEK_NEW_VARIABLES)
        self.assertEqual(recommendation(0.05, 0.02), IMPROVE_MODEL)
        self.assertEqual(recommendation(-0.05, 0.02), LIKELY_OVERFIT)

    def test_incremental_value(self):
        lines = records(
            self.call(
                "improve", data=self.data, new_features="x2", base_features="x1", json=True
            )
        )
        sets = of_kind(lines, "incremental_value")
        self.assertEqual([row["set"] for row in sets], ["base", "combined"])
        self.assertEqual(sets[1]["features"], ["x1", "x2"])
        boost = {row["metric"]: row["boost"] for row in of_kind(lines, "boost")}
        self.assertGreater(boost["r2"], 0.2)

    def test_model_headroom(self):
        predictions = self.write_frame(
            "predictions.csv", pd.DataFrame({"prediction": self.signal})
        )
        lines = records(
            self.call("improve", data=self.data, predictions=predictions, fraction=1.0, json=True)
        )
        gap = of_kind(lines, "suboptimality")[0]
        self.assertEqual(gap["metric"], "rmse")
        self.assertAlmostEqual(gap["model"], 0.5, delta=0.05)
        self.assertIn(gap["recommendation"], (SEEK_NEW_VARIABLES, IMPROVE_MODEL, LIKELY_OVERFIT))
        self.assertEqual(of_kind(lines, "metadata")[0]["recommendation"], gap["recommendation"])
        self.assertEqual(len(of_kind(lines, "generalized_metrics")), 1)
        residual = of_kind(lines, "residual_valuation")[0]
        self.assertEqual(residual["target"], "y_residual")
        self.assertLess(residual["best_r2"], 0.1)

    def test_exactly_one_mode(self):
        for options in ({}, {"predictions": "p.csv", "new_features": "x1"}):
            with self.subTest(options=options):
                with self.assertRaises(CommandError) as context:
                    self.call("improve", data=self.data, **options)
                self.assertEqual(context.exception.returncode, 2)

    def test_misaligned_predictions(self):
        predictions = self.write_frame("short.csv", pd.DataFrame({"prediction": [1.0, 2.0]}))
        with self.assertRaises(CommandError) as context:
            self.call("improve", data=self.data, predictions=predictions)
        self.assertEqual(context.exception.returncode, 2)


class MonitorCommandTests(CommandTestCase):
    """Tests for the monitor command."""

    def test_terminate_exits_10(self):
        out = StringIO()
        stdin = StringIO("epoch=1 metric=0.70\nepoch=2 metric=0.85\nepoch=3 metric=0.5\n")
        with self.assertRaises(SystemExit) as context:
            call_command("monitor", best=0.80, stdin=stdin, stdout=out)
        self.assertEqual(context.exception.code, 10)
        replies = out.getvalue().splitlines()
        self.assertEqual(replies[0], "CONTINUE")
        self.assertTrue(replies[1].startswith("TERMINATE reason="))
        self.assertEqual(len(replies), 2)

    def test_end_of_input(self):
        out = StringIO()
        stdin = StringIO("epoch=1 metric=0.70\n\nepoch=2 metric=0.75\n")
        call_command("monitor", best=0.80, stdin=stdin, stdout=out)
        self.assertEqual(out.getvalue(), "CONTINUE\nCONTINUE\n")

    def test_lower_is_better(self):
        out = StringIO()
        with self.assertRaises(SystemExit):
            call_command(
                "monitor",
                best=1.0,
                direction="lower_is_better",
                stdin=StringIO("epoch=1 metric=0.9\n"),
                stdout=out,
            )

    def test_malformed_line_exits_2(self):
        with self.assertRaises(CommandError) as context:
            call_command(
                "monitor", best=0.8, stdin=StringIO("epoch=1 accuracy=0.5\n"), stdout=StringIO()
            )
        self.assertEqual(context.exception.returncode, 2)

    def test_invalid_patience_exits_2(self):
        with self.assertRaises(CommandError) as context:
            call_command("monitor", best=0.8, patience=0, stdin=StringIO(""), stdout=StringIO())
        self.assertEqual(context.exception.returncode, 2)

    def test_batch_analysis(self):
        runs = self.tmp / "runs.jsonl"
        runs.write_text(self.call("synth", runs=20, best=0.82, overfit_share=0.5, epochs=50))
        lines = records(self.call("monitor", best=0.82, runs=str(runs), json=True))
        analysis = of_kind(lines, "batch_analysis")[0]
        self.assertEqual(analysis["runs"], 20)
        self.assertEqual(analysis["terminated_runs"], 10)
        self.assertEqual(analysis["regret"], 0.0)

    def test_missing_runs_file(self):
        with self.assertRaises(CommandError) as context:
            self.call("monitor", best=0.8, runs=str(self.tmp / "missing.jsonl"))
        self.assertEqual(context.exception.returncode, 2)


class SynthCommandTests(CommandTestCase):
    """Tests for the synth command."""

    def test_dataset_csv(self):
        output = self.call("synth", f_id="f2", d=3, sigma=0.5, n=200)
        lines = output.splitlines()
        self.assertEqual(lines[0], "x1,x2,x3,y")
        self.assertEqual(len(lines), 201)
        self.assertEqual(output, self.call("synth", f_id="f2", d=3, sigma=0.5, n=200))

    def test_classification_csv(self):
        output = self.call("synth", d=2, p_e=0.1, n=100)
        labels = {line.split(",")[-1] for line in output.splitlines()[1:]}
        self.assertEqual(labels, {"0", "1"})

    def test_r2_sets_sigma(self):
        high = self.call("synth", r2=0.99, n=100)
        default = self.call("synth", sigma=sigma_for_target_r2(0.99), n=100)
        self.assertEqual(high, default)

    def test_runs(self):
        output = self.call("synth", runs=3, epochs=5, seed=1)
        lines = records(output)
        self.assertEqual([line["run_id"] for line in lines], ["run-000", "run-001", "run-002"])
        self.assertEqual(len(lines[0]["epochs"]), 5)

    def test_invalid_values_exit_2(self):
        for options in ({"d": 0}, {"r2": 1.5}, {"runs": 0}, {"p_e": 0.7}):
            with self.subTest(options=options):
                with self.assertRaises(CommandError) as context:
                    self.call("synth", **options)
                self.assertEqual(context.exception.returncode, 2)