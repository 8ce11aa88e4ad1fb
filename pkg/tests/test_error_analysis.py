"""Tests for truncation error metrics, threshold detection and the error model."""

import math

import numpy as np
import pandas as pd
import pytest

from carleman_lbm.errors import InsufficientDataError, InvalidParameterError
from carleman_lbm.error_analysis import (
    detect_threshold,
    epsilon_C,
    epsilon_rmse,
    fit_error_model,
    fit_power_law,
    measure_truncation_error,
    required_truncation_order,
    rmse_series,
    velocity_error_series,
)
from carleman_lbm.simulation import initial_state, run_lbe, select_params


def test_identical_trajectories_have_zero_error(small_sim):
    traj = run_lbe(initial_state("sinusoidal", small_sim), small_sim, small_sim.geometry())
    assert epsilon_C(traj, traj.g, small_sim) == 0.0
    assert epsilon_rmse(traj, traj, 1) == 0.0


def test_velocity_error_is_relative_to_the_initial_scale(small_sim):
    exact = np.zeros((2, 24))
    approx = np.zeros((2, 24))
    # a unit +x population difference at every site gives |du| = 1 per site
    approx[1, 1::3] = 1.0
    series = velocity_error_series(exact, approx, small_sim)
    assert series[0] == 0.0
    assert series[1] == pytest.approx(1.0 / small_sim.u_ini_star)
    assert epsilon_C(exact, approx, small_sim) == pytest.approx(1.0 / small_sim.u_ini_star)


def test_rmse_uses_full_populations():
    exact = np.zeros((1, 3))
    approx = np.array([[2 / 3 * 0.1, 0.0, 0.0]])
    # f = g + w: only the rest population differs, by 10 percent
    assert rmse_series(exact, approx, 1)[0] == pytest.approx(0.1 / 3)


def test_shape_mismatch_is_rejected(small_sim):
    with pytest.raises(InvalidParameterError):
        epsilon_C(np.zeros((2, 24)), np.zeros((3, 24)), small_sim)


def test_error_decreases_with_truncation_order_at_low_re():
    sim = select_params(20, 0.75, 1)
    errors = [measure_truncation_error(sim, N_C).epsilon_C for N_C in (1, 2, 3)]
    assert errors[0] > errors[1] > errors[2] > 0


@pytest.mark.slow
def test_error_decreases_with_truncation_order_below_threshold():
    sim = select_params(50, 0.75, 1)
    errors = [measure_truncation_error(sim, N_C).epsilon_C for N_C in (1, 2, 3)]
    assert errors[0] > errors[1] > errors[2] > 0


@pytest.mark.slow
def test_second_order_is_worse_above_threshold():
    sim = select_params(1000, 0.75, 1)
    first, second = (measure_truncation_error(sim, N_C).epsilon_C for N_C in (1, 2))
    assert second > first


def test_error_record_carries_series(small_sim):
    record = measure_truncation_error(small_sim, 2)
    assert len(record.series_C) == small_sim.T_star + 1
    assert record.epsilon_C == pytest.approx(max(record.series_C[1:]))
    assert record.N_C == 2 and record.D == 1


def test_threshold_interpolates_the_crossing():
    table = [
        (20, 1, 1e-2), (20, 2, 1e-3),
        (100, 1, 2e-2), (100, 2, 1e-2),
        (200, 1, 3e-2), (200, 2, 5e-2),
    ]
    result = detect_threshold(table)
    assert result.found
    assert result.bracket == (100.0, 200.0)
    # diff goes from -0.01 to +0.02, crossing a third of the way
    assert result.Re_T == pytest.approx(100 + 100 / 3)


def test_threshold_not_found_and_flip_at_first_point():
    no_flip = pd.DataFrame({"Re": [20, 20, 50, 50], "N_C": [1, 2, 1, 2], "epsilon_C": [1, 0.5, 1, 0.5]})
    result = detect_threshold(no_flip)
    assert not result.found
    assert "not found in range [20, 50]" in result.message

    flipped = [(20, 1, 1.0), (20, 2, 2.0), (50, 1, 1.0), (50, 2, 3.0)]
    assert detect_threshold(flipped).Re_T == 20.0


def test_threshold_needs_both_orders():
    with pytest.raises(InsufficientDataError):
        detect_threshold([(20, 1, 1.0), (50, 1, 2.0)])
    with pytest.raises(InsufficientDataError):
        detect_threshold([(20, 1, 1.0), (20, 2, 2.0)])


def test_required_truncation_order():
    fit = fit_error_model([(1, 1e-2), (2, 1e-3), (3, 1e-4)])
    assert fit.Gamma == pytest.approx(-math.log(10))
    assert required_truncation_order(fit, 3e-7) == 6

    diverging = fit_error_model([(1, 1e-3), (2, 1e-2)])
    with pytest.raises(InvalidParameterError):
        required_truncation_order(diverging, 1e-6)


def test_power_law_fit_from_pairs():
    fit = fit_power_law([(10, 2.0 * 10 ** 1.5), (100, 2.0 * 100 ** 1.5)])
    assert fit.chi == pytest.approx(1.5)
    assert fit.c == pytest.approx(2.0)


@pytest.mark.slow
def test_threshold_sweep_finds_a_crossing_near_one_hundred():
    rows = []
    for Re in (20, 50, 100, 200, 500, 1000):
        sim = select_params(Re, 0.75, 1)
        for N_C in (1, 2):
            record = measure_truncation_error(sim, N_C)
            rows.append((Re, N_C, record.epsilon_C))
    result = detect_threshold(rows)
    assert result.found
    assert 50 <= result.Re_T <= 500
