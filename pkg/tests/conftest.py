"""Shared fixtures: small velocity models, lattices and simulation parameters."""

import json

import numpy as np
import pytest

from carleman_lbm.lattice_model import LatticeGeometry, velocity_model
from carleman_lbm.simulation import SimParams


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running reproduction checks (deselect with -m 'not slow')")


@pytest.fixture
def d1q3():
    return velocity_model(1)


@pytest.fixture
def d2q9():
    return velocity_model(2)


@pytest.fixture
def ring8():
    """Periodic D=1 lattice of 8 sites."""
    return LatticeGeometry.periodic(8, 1)


@pytest.fixture
def channel():
    """6 x 4 D=2 lattice with a wall row at y = 0."""
    walls = np.zeros((6, 4), dtype=bool)
    walls[:, 0] = True
    return LatticeGeometry(shape=(6, 4), walls=walls)


@pytest.fixture
def small_sim():
    """
    Hand-picked D=1 parameters with N_x = 8 and three steps.

    u_ini follows the N_x^(-1/2) rule; tau is kept away from 1/2 so the
    Carleman tests stay well conditioned.
    """
    return SimParams(
        Re=20.0, beta=0.75, D=1, N_x=8, T_star=3, tau_bar_star=0.6, u_ini_star=8 ** -0.5,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def config_file(tmp_path):
    """Write a JSON config and return its path."""

    def write(data):
        path = tmp_path / "config.json"
        path.write_text(json.dumps(data))
        return path

    return write
