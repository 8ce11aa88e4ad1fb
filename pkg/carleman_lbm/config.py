"""Experiment configuration: one JSON document per run, validated with pydantic."""

import json
import logging
from pathlib import Path
from typing import Dict, List, Literal, Optional, Union, get_args

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from carleman_lbm.carleman import DEFAULT_MAX_MEM, DEFAULT_SPARSE_LIMIT
from carleman_lbm.errors import ConfigError
from carleman_lbm.simulation import InitialStateSpec

logger = logging.getLogger("carleman_lbm")

Experiment = Literal[
    "params-table",
    "carleman-error",
    "threshold-scan",
    "condition-scaling",
    "be-ratio",
    "cost-report",
    "gate-budget",
    "drag-demo",
]

EXPERIMENTS: List[str] = list(get_args(Experiment))


class PowerLawFit(BaseModel):
    """kappa ~ c Re^chi, used by cost reports when no condition study has been run."""

    chi: float
    c: float = Field(gt=0)


class DragSetup(BaseModel):
    """Flat walls: whole lattice planes normal to ``axis`` at the listed coordinates."""

    axis: int = Field(default=1, ge=0)
    planes: List[int] = Field(default_factory=lambda: [0])
    components: Optional[List[int]] = None
    reference_mass: float = Field(default=1.0, gt=0)
    length: Optional[float] = Field(default=None, gt=0)
    nu: Optional[float] = Field(default=None, gt=0)


class ExperimentConfig(BaseModel):
    """Everything needed to reproduce one experiment run."""

    experiment: Experiment
    D: int = 1
    beta: float = Field(default=0.75, gt=0)
    Re: List[float] = Field(default_factory=lambda: [20.0])
    N_C: List[int] = Field(default_factory=lambda: [1, 2, 3])
    W: int = Field(default=0, ge=0)
    kind: Literal["history", "final"] = "history"
    epsilon: float = Field(default=1e-6, gt=0, lt=1)
    epsilon_Q: float = Field(default=1e-3, ge=1e-10, lt=1)
    tau_bar_star: List[float] = Field(default_factory=lambda: [0.5])
    initial_state: InitialStateSpec = Field(default_factory=InitialStateSpec)
    fit: Optional[PowerLawFit] = None
    drag: DragSetup = Field(default_factory=DragSetup)
    max_mem: Optional[int] = DEFAULT_MAX_MEM
    assemble_limit: Optional[int] = DEFAULT_SPARSE_LIMIT
    max_iter: int = Field(default=400, ge=1)
    tol: float = Field(default=1e-8, gt=0)
    seed: int = Field(default=0, ge=0)
    workers: int = Field(default=1, ge=1)

    @field_validator("D")
    @classmethod
    def _check_dimension(cls, D: int) -> int:
        if D not in (1, 2, 3):
            raise ValueError(f"D must be 1, 2 or 3, got {D}")
        return D

    @field_validator("Re")
    @classmethod
    def _check_re(cls, values: List[float]) -> List[float]:
        if not values or any(v < 1 for v in values):
            raise ValueError("Re must be a non-empty list of values >= 1")
        return values

    @field_validator("N_C")
    @classmethod
    def _check_orders(cls, values: List[int]) -> List[int]:
        if not values or any(v < 1 for v in values):
            raise ValueError("N_C must be a non-empty list of orders >= 1")
        return values

    @field_validator("tau_bar_star")
    @classmethod
    def _check_tau(cls, values: List[float]) -> List[float]:
        if not values or any(v < 0.5 for v in values):
            raise ValueError("tau_bar_star values must be >= 1/2")
        return values

    @model_validator(mode="after")
    def _check_combination(self) -> "ExperimentConfig":
        if self.kind == "final" and self.W < 1:
            raise ValueError("final systems need W >= 1")
        if self.experiment == "gate-budget" and self.D not in (1, 2):
            raise ValueError("gate budgets exist for D = 1 and D = 2 only")
        if self.experiment == "threshold-scan" and not {1, 2} <= set(self.N_C):
            raise ValueError("threshold scans need N_C = 1 and N_C = 2")
        if self.experiment == "drag-demo" and self.drag.axis >= self.D:
            raise ValueError(f"wall axis {self.drag.axis} out of range for D={self.D}")
        return self


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Read and validate an experiment configuration.

    Raises:
        ConfigError: the file is missing, is not JSON, or fails validation
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"Config {path} must hold a JSON object")
    try:
        config = ExperimentConfig(**data)
    except ValidationError as e:
        raise ConfigError(f"Invalid config {path}: {e}") from e
    logger.info(f"Loaded {config.experiment} config from {path}")
    return config


_DEFAULTS: Dict[str, Dict] = {
    "params-table": {"D": 1, "Re": [1000, 200, 100, 500, 30, 150, 50], "N_C": [1, 2, 3]},
    "carleman-error": {"D": 1, "Re": [20, 50, 200], "N_C": [1, 2, 3]},
    "threshold-scan": {"D": 1, "Re": [20, 50, 100, 150, 200, 300, 500, 1000], "N_C": [1, 2]},
    "condition-scaling": {"D": 1, "Re": [10, 20, 50, 100], "N_C": [1]},
    "be-ratio": {"D": 1, "N_C": [1, 2, 3, 4, 5, 6, 7, 8], "tau_bar_star": [0.5]},
    "cost-report": {"D": 2, "Re": [100, 1000, 10000], "N_C": [1, 2], "W": 10},
    "gate-budget": {"D": 2, "Re": [1e6], "N_C": [2, 3, 4], "W": 10, "epsilon": 1e-6},
    "drag-demo": {
        "D": 2, "Re": [20], "N_C": [1],
        "initial_state": {"kind": "taylor_green"},
        "drag": {"axis": 1, "planes": [0]},
    },
}


def default_config(experiment: str) -> ExperimentConfig:
    """A runnable configuration for ``experiment`` with desk-sized parameters."""
    if experiment not in _DEFAULTS:
        raise ConfigError(f"Unknown experiment '{experiment}'; expected one of {EXPERIMENTS}")
    return ExperimentConfig(experiment=experiment, **_DEFAULTS[experiment])
