"""Tests for the log-space least-squares fits."""

import math

import numpy as np
import pytest

from carleman_lbm.errors import InsufficientDataError, InvalidParameterError
from carleman_lbm.stats import fit_exponential, fit_power, log_linear_fit


def test_exponential_fit_recovers_exact_data():
    x = [1, 2, 3, 4]
    y = [0.5 * math.exp(-0.7 * n) for n in x]
    fit = fit_exponential(x, y)
    assert fit.Gamma == pytest.approx(-0.7)
    assert fit.E == pytest.approx(0.5)
    assert fit.residual == pytest.approx(0.0, abs=1e-12)
    assert fit.convergent is True
    assert fit.predict(5) == pytest.approx(0.5 * math.exp(-3.5))


def test_power_fit_recovers_exact_data():
    re = np.array([10.0, 20.0, 50.0, 100.0])
    fit = fit_power(re, 1.6 * re ** 1.167)
    assert fit.chi == pytest.approx(1.167)
    assert fit.c == pytest.approx(1.6)
    assert fit.convergent is False


def test_fits_are_scale_equivariant():
    x = [1, 2, 3]
    y = np.array([0.2, 0.05, 0.03])
    base = fit_exponential(x, y)
    scaled = fit_exponential(x, 7.0 * y)
    assert scaled.Gamma == pytest.approx(base.Gamma, abs=1e-12)
    assert scaled.intercept - base.intercept == pytest.approx(math.log(7.0))


def test_fit_needs_two_distinct_points():
    with pytest.raises(InsufficientDataError):
        log_linear_fit([1], [1.0])
    with pytest.raises(InsufficientDataError):
        log_linear_fit([2, 2], [1.0, 3.0])


def test_fit_rejects_bad_values():
    with pytest.raises(InvalidParameterError):
        log_linear_fit([1, 2], [1.0, 0.0])
    with pytest.raises(InvalidParameterError):
        log_linear_fit([1, 2, 3], [1.0, 2.0])
    with pytest.raises(InvalidParameterError):
        fit_power([0.0, 1.0], [1.0, 2.0])
