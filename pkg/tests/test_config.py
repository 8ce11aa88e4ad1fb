"""Tests for experiment configuration loading and validation."""

import pytest
from pydantic import ValidationError

from carleman_lbm.config import EXPERIMENTS, ExperimentConfig, default_config, load_config
from carleman_lbm.errors import ConfigError


@pytest.mark.parametrize("name", EXPERIMENTS)
def test_every_experiment_has_a_valid_default(name):
    config = default_config(name)
    assert config.experiment == name
    # defaults survive a JSON round trip through the model
    assert ExperimentConfig(**config.model_dump(mode="json")) == config


def test_default_sweeps():
    params = default_config("params-table")
    assert params.D == 1
    assert params.Re == [1000, 200, 100, 500, 30, 150, 50]
    gates = default_config("gate-budget")
    assert (gates.D, gates.W, gates.N_C) == (2, 10, [2, 3, 4])
    with pytest.raises(ConfigError):
        default_config("speedup")


@pytest.mark.parametrize("overrides", [
    {"experiment": "condition-scaling", "kind": "final", "W": 0},
    {"experiment": "gate-budget", "D": 3},
    {"experiment": "threshold-scan", "N_C": [2, 3]},
    {"experiment": "drag-demo", "D": 2, "drag": {"axis": 2}},
    {"experiment": "params-table", "Re": [0.5]},
    {"experiment": "params-table", "N_C": []},
    {"experiment": "be-ratio", "tau_bar_star": [0.4]},
    {"experiment": "params-table", "D": 4},
    {"experiment": "no-such-study"},
])
def test_invalid_combinations(overrides):
    with pytest.raises(ValidationError):
        ExperimentConfig(**overrides)


def test_final_system_with_waiting_steps():
    config = ExperimentConfig(experiment="condition-scaling", kind="final", W=2)
    assert config.W == 2


def test_load_config(config_file):
    config = load_config(config_file({"experiment": "gate-budget", "D": 1, "N_C": [2]}))
    assert config.D == 1
    assert config.N_C == [2]
    assert config.epsilon == 1e-6


def test_load_config_errors(config_file, tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    with pytest.raises(ConfigError):
        load_config(config_file([1, 2, 3]))
    with pytest.raises(ConfigError):
        load_config(config_file({"experiment": "gate-budget", "D": 3}))

    broken = tmp_path / "broken.json"
    broken.write_text("{\"experiment\": ")
    with pytest.raises(ConfigError):
        load_config(broken)
