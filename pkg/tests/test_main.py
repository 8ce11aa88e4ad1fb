"""Tests for the command-line interface and its exit codes."""

import json

from typer.testing import CliRunner

from carleman_lbm.main import app

runner = CliRunner()


def test_params_table_command(tmp_path):
    result = runner.invoke(app, ["params-table", "--out", str(tmp_path)])
    assert result.exit_code == 0, result.output
    assert (tmp_path / "params-table" / "results.csv").exists()
    assert (tmp_path / "params-table" / "manifest.json").exists()


def test_gate_budget_with_config(tmp_path, config_file):
    path = config_file({"experiment": "gate-budget", "D": 1, "N_C": [2, 3], "W": 4})
    result = runner.invoke(app, ["gate-budget", "--config", str(path), "--out", str(tmp_path)])
    assert result.exit_code == 0, result.output
    manifest = json.loads((tmp_path / "gate-budget" / "manifest.json").read_text())
    assert manifest["config"]["W"] == 4
    assert manifest["completed_points"] == ["Re=20_NC=2", "Re=20_NC=3"]


def test_invalid_log_level(tmp_path):
    result = runner.invoke(app, ["params-table", "--out", str(tmp_path), "--log-level", "LOUD"])
    assert result.exit_code == 2


def test_config_for_another_experiment(tmp_path, config_file):
    path = config_file({"experiment": "gate-budget"})
    result = runner.invoke(app, ["params-table", "--config", str(path), "--out", str(tmp_path)])
    assert result.exit_code == 2


def test_invalid_config_file(tmp_path, config_file):
    path = config_file({"experiment": "params-table", "N_C": [0]})
    result = runner.invoke(app, ["params-table", "--config", str(path), "--out", str(tmp_path)])
    assert result.exit_code == 2


def test_memory_cap_exit_code(tmp_path):
    # the first order-1 Carleman vector at Re = 20 already needs 240 bytes
    result = runner.invoke(app, ["carleman-error", "--max-mem", "100", "--out", str(tmp_path)])
    assert result.exit_code == 3


def test_init_config(tmp_path):
    output = tmp_path / "drag.json"
    result = runner.invoke(app, ["init-config", "drag-demo", "--output", str(output)])
    assert result.exit_code == 0
    data = json.loads(output.read_text())
    assert data["experiment"] == "drag-demo"
    assert data["D"] == 2

    result = runner.invoke(app, ["init-config", "speedup", "--output", str(output)])
    assert result.exit_code == 2
