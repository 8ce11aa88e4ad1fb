"""Tests for sweep planning, point runners and resumable experiment runs."""

import json

import numpy as np
import pandas as pd
import pytest

from carleman_lbm.config import ExperimentConfig, default_config
from carleman_lbm.errors import ConfigError
from carleman_lbm.export import config_hash
from carleman_lbm.experiments import COLUMNS, load_point, plan_points, run_experiment, wall_mask


def test_plan_keys():
    config = ExperimentConfig(experiment="carleman-error", Re=[20, 1000], N_C=[1, 2])
    keys = [p.key for p in plan_points(config)]
    assert keys == ["Re=20_NC=1", "Re=20_NC=2", "Re=1000_NC=1", "Re=1000_NC=2"]

    be = ExperimentConfig(experiment="be-ratio", tau_bar_star=[0.5, 0.75], N_C=[1])
    assert [p.key for p in plan_points(be)] == ["tau=0.5_NC=1", "tau=0.75_NC=1"]

    drag = ExperimentConfig(experiment="drag-demo", D=2, Re=[20, 50], N_C=[2])
    points = plan_points(drag)
    assert [p.key for p in points] == ["Re=20", "Re=50"]
    assert all(p.N_C == 2 for p in points)


def test_wall_mask():
    walls = wall_mask((4, 3), 1, [0, -1])
    assert walls[:, 0].all() and walls[:, 2].all()
    assert not walls[:, 1].any()
    assert wall_mask((5,), 0, [2]).sum() == 1


def test_params_table_run(tmp_path):
    outcome = run_experiment(default_config("params-table"), tmp_path)
    assert len(outcome.rows) == 21
    first = outcome.rows[0]
    assert (first["Re"], first["N_C"], first["N_x"], first["T_star"]) == (1000, 1, 178, 2372)
    assert first["tau_bar_star"] == 0.54

    df = pd.read_csv(tmp_path / "results.csv")
    assert list(df.columns) == COLUMNS["params-table"]
    assert set(outcome.files) == {"results.csv"}
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert len(manifest["completed_points"]) == 21
    assert manifest["files"]["results.csv"] == outcome.files["results.csv"]


def test_resume_skips_finished_points(tmp_path):
    config = default_config("gate-budget")
    first = run_experiment(config, tmp_path)
    before = (tmp_path / "results.csv").read_bytes()
    assert first.resumed == 0

    seen = []
    second = run_experiment(config, tmp_path, on_point=seen.append)
    assert second.resumed == 3
    assert seen == ["Re=1e+06_NC=2", "Re=1e+06_NC=3", "Re=1e+06_NC=4"]
    assert (tmp_path / "results.csv").read_bytes() == before

    # a changed configuration invalidates the stored points
    changed = ExperimentConfig(**{**config.model_dump(), "epsilon": 1e-8})
    assert run_experiment(changed, tmp_path).resumed == 0
    assert load_point(tmp_path, "Re=1e+06_NC=2", config_hash(config.model_dump(mode="json"))) is None


def test_gate_budget_rows(tmp_path):
    outcome = run_experiment(default_config("gate-budget"), tmp_path)
    assert [row["N_C"] for row in outcome.rows] == [2, 3, 4]
    assert all(row["relative_gap"] <= 1e-3 for row in outcome.rows)
    stored = json.loads((tmp_path / "points" / "Re=1e+06_NC=2.json").read_text())
    assert "collision_blocks" in stored["detail"]["terms"]


def test_cost_report_needs_a_fit(tmp_path):
    config = ExperimentConfig(experiment="cost-report", D=1, Re=[100], N_C=[5])
    with pytest.raises(ConfigError):
        run_experiment(config, tmp_path)


def test_cost_report_with_explicit_fit(tmp_path):
    config = ExperimentConfig(
        experiment="cost-report", D=1, Re=[20], N_C=[1], fit={"chi": 1.0, "c": 2.0},
    )
    row = run_experiment(config, tmp_path).rows[0]
    assert row["kappa"] == pytest.approx(40.0)
    assert row["q_Q_simplified"] >= row["q_Q"]


def test_error_sweep_summary(tmp_path):
    config = ExperimentConfig(experiment="carleman-error", D=1, Re=[20], N_C=[1, 2])
    outcome = run_experiment(config, tmp_path)
    errors = [row["epsilon_C"] for row in outcome.rows]
    assert errors[0] > errors[1] > 0
    fit = outcome.summary["error_model"][0]
    assert fit["Re"] == 20.0
    assert fit["Gamma"] == pytest.approx(np.log(errors[1] / errors[0]))
    assert (tmp_path / "summary.json").exists()


def test_be_ratio_sweep(tmp_path):
    config = ExperimentConfig(experiment="be-ratio", D=1, tau_bar_star=[0.6], N_C=[1, 2, 3], workers=2)
    outcome = run_experiment(config, tmp_path)
    assert [row["N_C"] for row in outcome.rows] == [1, 2, 3]
    assert all(row["be_ratio"] >= 1.0 - 1e-12 for row in outcome.rows)
    assert outcome.summary["be_fit"][0]["tau_bar_star"] == 0.6


def test_drag_demo_identity(tmp_path):
    config = ExperimentConfig(
        experiment="drag-demo", D=1, Re=[20], N_C=[1], drag={"axis": 0, "planes": [0]},
    )
    outcome = run_experiment(config, tmp_path)
    row = outcome.rows[0]
    assert row["links"] == 2
    assert row["identity_residual"] <= 1e-12
    assert row["F0"] == pytest.approx(0.0, abs=1e-15)
