import json
import os
import tempfile
import unittest
from typing import List

import pandas as pd
from click.testing import CliRunner, Result

import import_parent
import main_function


def invoke(arguments: List[str]) -> Result:
    return CliRunner().invoke(main_function.cli, arguments)


class CliTest(unittest.TestCase):
    def test_print_config(self):
        result: Result = invoke(["--print-config", "--set", "federation.num_clients=7"])
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertIn("num_clients: 7", result.output)

    def test_unknown_key(self):
        result: Result = invoke(["--set", "federation.clients=7", "--print-config"])
        self.assertNotEqual(result.exit_code, 0)
        self.assertIn("Unknown configuration key", result.output)

    def test_missing_config_file(self):
        result: Result = invoke(["--config", "/nonexistent/config.yaml", "--print-config"])
        self.assertNotEqual(result.exit_code, 0)
        self.assertIn("does not exist", result.output)

    def test_parse_values(self):
        self.assertEqual(main_function._parse_values("1,2,5"), [1, 2, 5])
        self.assertEqual(main_function._parse_values("[0.5, 0.1]"), [0.5, 0.1])

    def test_run(self):
        with tempfile.TemporaryDirectory() as directory:
            result: Result = invoke(
                [
                    "--set",
                    f"output.dir={directory}",
                    "--set",
                    "output.merge_tree_json=true",
                    "run",
                    "--epsilon",
                    "1000",
                ]
            )
            written: pd.DataFrame = pd.read_csv(os.path.join(directory, "results.csv"))
            files: List[str] = os.listdir(directory)
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertIn("ari=", result.output)
        self.assertEqual(len(written), 1)
        self.assertEqual(written["method"][0], "gfc")
        self.assertIn("merge_tree.json", files)
        self.assertIn("manifests", files)

    def test_run_failure_is_reported(self):
        with tempfile.TemporaryDirectory() as directory:
            result: Result = invoke(
                [
                    "--set",
                    f"output.dir={directory}",
                    "--set",
                    "n_clusters=1000000",
                    "run",
                    "--epsilon",
                    "1",
                ]
            )
        self.assertNotEqual(result.exit_code, 0)
        self.assertIn("[topology]", result.output)

    def test_dump_field(self):
        with tempfile.TemporaryDirectory() as directory:
            csv_path: str = os.path.join(directory, "field.csv")
            tree_path: str = os.path.join(directory, "tree.json")
            result: Result = invoke(
                ["dump-field", "--epsilon", "1", "--out", csv_path, "--tree-out", tree_path]
            )
            with open(csv_path, "r") as input_file:
                header: str = input_file.readline().strip()
            with open(tree_path, "r") as input_file:
                tree: dict = json.load(input_file)
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertEqual(header, "probe,x0,x1,energy")
        self.assertIn("nodes", tree)

    def test_scaling_needs_two_epsilons(self):
        with tempfile.TemporaryDirectory() as directory:
            result: Result = invoke(
                ["--set", f"output.dir={directory}", "scaling", "--epsilons", "1"]
            )
        self.assertNotEqual(result.exit_code, 0)
        self.assertIn("at least 2", result.output)


if __name__ == "__main__":
    unittest.main()
