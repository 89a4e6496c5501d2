import json
import os

import numpy as np
import pytest

from ensplan.cli import main
from ensplan.dynamics import load_weights

from test_harness import minimal_scenario


@pytest.fixture()
def scenario_file(tmp_path):
    path = tmp_path / "unit.json"
    path.write_text(json.dumps(minimal_scenario()))
    return str(path)


@pytest.fixture()
def colliding_file(tmp_path):
    data = minimal_scenario()
    data["obstacles"] = [{"name": "wall", "length": 4.4, "width": 1.8,
                          "waypoints": [[0.0, 2.0, 0.0, 0.0, 0.0]]}]
    path = tmp_path / "wall.json"
    path.write_text(json.dumps(data))
    return str(path)


class TestRun:
    def test_run_writes_outputs(self, scenario_file, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["run", "--scenario", scenario_file, "--out", str(out)]) == 0
        assert (out / "trace.csv").exists()
        assert (out / "summary.json").exists()
        assert "termination max_steps" in capsys.readouterr().out

    def test_collision_exit_code_2(self, colliding_file, tmp_path):
        assert main(["run", "--scenario", colliding_file,
                     "--out", str(tmp_path / "o")]) == 2

    def test_bad_scenario_exit_code_1(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"nope": 1}))
        assert main(["run", "--scenario", str(bad), "--out", str(tmp_path / "o")]) == 1
        assert "error" in capsys.readouterr().err

    def test_plans_flag_writes_plan_files(self, scenario_file, tmp_path):
        out = tmp_path / "plans"
        assert main(["run", "--scenario", scenario_file, "--out", str(out),
                     "--plans"]) == 0
        assert (out / "plan_k0000.csv").exists()

    def test_mode_and_seed_flags(self, scenario_file, tmp_path):
        out = tmp_path / "enks"
        assert main(["run", "--scenario", scenario_file, "--out", str(out),
                     "--mode", "enks", "--seed", "5"]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["mode"] == "enks" and summary["seed"] == 5


class TestCompare:
    def test_compare_runs(self, scenario_file, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        main(["run", "--scenario", scenario_file, "--out", str(a), "--seed", "1"])
        main(["run", "--scenario", scenario_file, "--out", str(b), "--seed", "2",
              "--mode", "enks"])
        report_path = tmp_path / "report.json"
        assert main(["compare", str(a), str(b), "--out", str(report_path)]) == 0
        report = json.loads(report_path.read_text())
        assert report["runs"]["a"]["mode"] == "enkts"
        assert report["runs"]["b"]["mode"] == "enks"

    def test_compare_mismatched_scenarios_errors(self, scenario_file, tmp_path,
                                                 capsys):
        data = minimal_scenario()
        data["termination"]["max_steps"] = 11
        other = tmp_path / "other.json"
        other.write_text(json.dumps(data))
        a, b = tmp_path / "a", tmp_path / "b"
        main(["run", "--scenario", scenario_file, "--out", str(a)])
        main(["run", "--scenario", str(other), "--out", str(b)])
        assert main(["compare", str(a), str(b),
                     "--out", str(tmp_path / "r.json")]) == 1
        assert "different scenarios" in capsys.readouterr().err


class TestCheck:
    def test_check_nmpc_suite(self, capsys):
        assert main(["check", "--suite", "nmpc"]) == 0
        out = capsys.readouterr().out
        assert "[PASS] nmpc/" in out


class TestFitMlp:
    def test_fit_mlp_writes_loadable_weights(self, tmp_path):
        out = tmp_path / "model.mlpw"
        assert main(["fit-mlp", "--out", str(out), "--seed", "1"]) == 0
        model = load_weights(str(out))
        assert model.in_dim == 6 and model.out_dim == 4
