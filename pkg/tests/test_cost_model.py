"""Tests for prefactors, qubit counts, query bounds and the classical comparison."""

import math

import numpy as np
import pytest

from carleman_lbm.carleman import build_collision_matrices
from carleman_lbm.cost_model import (
    QUERY_SIMPLIFIED,
    alpha_C,
    alpha_F2bar,
    alpha_IF1,
    ancilla_qubits,
    be_ratio_approx,
    be_ratio_bound,
    build_cost_report,
    classical_comparison,
    fit_be_ratio,
    lookup_condition_fit,
    measurement_overhead,
    p_final,
    p_first_block,
    prefactors,
    query_bound_error,
    query_bound_re,
    query_bounds,
    qubit_counts,
)
from carleman_lbm.errors import InvalidParameterError
from carleman_lbm.lattice_model import velocity_model
from carleman_lbm.linear_system import norm_C


@pytest.mark.parametrize("tau", [0.5 + 1e-6, 0.6, 0.75, 1.0, 2.0])
@pytest.mark.parametrize("D", [1, 2, 3])
def test_alpha_IF1_is_the_largest_singular_value(tau, D):
    IF1 = build_collision_matrices(velocity_model(D), tau).IF1
    assert alpha_IF1(tau, D) == pytest.approx(np.linalg.svd(IF1, compute_uv=False)[0], rel=1e-10)


@pytest.mark.parametrize("tau", [0.5 + 1e-6, 0.6, 0.75, 1.0, 2.0])
@pytest.mark.parametrize("D", [1, 2])
def test_alpha_F2bar_is_the_largest_singular_value(tau, D):
    F2 = build_collision_matrices(velocity_model(D), tau).F2_tilde
    assert alpha_F2bar(tau, D) == pytest.approx(np.linalg.svd(F2, compute_uv=False)[0], rel=1e-10)


def test_marginal_relaxation_endpoints():
    # tau = 1/2 is allowed as a limiting case
    assert alpha_IF1(0.5, 1) == pytest.approx(math.sqrt(3 - 1 + math.sqrt(3)), rel=1e-9)
    assert alpha_F2bar(0.5, 1) == pytest.approx(2 * math.sqrt(6), rel=1e-9)
    with pytest.raises(InvalidParameterError):
        alpha_IF1(0.49, 1)


def test_alpha_C_sums_the_placement_counts():
    assert alpha_C(2.0, 3.0, 1) == 2.0
    assert alpha_C(2.0, 3.0, 2) == 4.0 + 3.0
    # N_C = 4: a^4 + 3 a^2 b + b^2
    assert alpha_C(2.0, 3.0, 4) == 16.0 + 3 * 4.0 * 3.0 + 9.0


def test_ancilla_count():
    # N_C = 1: 2 + 0 + 0
    assert ancilla_qubits(1, 2) == 2
    # N_C = 2: 3 + 1 + max(0, 0 + 7)
    assert ancilla_qubits(2, 2) == 11
    with pytest.raises(InvalidParameterError):
        ancilla_qubits(0, 1)


def test_data_qubits_for_the_largest_case():
    counts = qubit_counts(1e8, 0.75, 3, 10, 10)
    assert counts.n_D == 722
    assert counts.n_D_raw == pytest.approx(721.1, abs=0.05)


def test_register_qubit_count():
    counts = qubit_counts(20, 0.75, 2, 2, 3, N_x=10, T_star=90)
    # ceil(log2 91) + 3 + 1 + 2 (2*4 + 4)
    assert counts.n_D_registers == 7 + 3 + 1 + 24


def test_prefactor_set():
    pre = prefactors(0.6, 2, 3, Re=100, beta=0.75, W=2)
    assert pre.alpha_A == pytest.approx(1 + pre.alpha_C)
    assert pre.alpha_C == pytest.approx(alpha_C(pre.alpha_IF1, pre.alpha_F2bar, 3))
    assert pre.n_D == qubit_counts(100, 0.75, 2, 3, 2).n_D


def test_be_ratio_at_first_order():
    model = velocity_model(1)
    a = alpha_IF1(0.5, 1)
    value = norm_C(model, 0.5, 1)
    assert be_ratio_bound(0.5, 1, 1, value) == pytest.approx((1 + a) / math.sqrt(1 + a * a), rel=1e-10)
    assert be_ratio_approx(4) == pytest.approx(math.e)


def test_be_ratio_grows_with_truncation_order():
    model = velocity_model(1)
    ratios = [be_ratio_bound(0.5, n, 1, norm_C(model, 0.5, n)) for n in (1, 2, 3, 4)]
    assert all(r >= 1.0 - 1e-12 for r in ratios)
    assert ratios[-1] > ratios[0]


def test_be_ratio_fit_recovers_growth_rate():
    n = [1, 2, 3, 4, 5]
    fit = fit_be_ratio(n, [0.8 * math.exp(0.273 * k) for k in n])
    assert fit.slope == pytest.approx(0.273)
    assert fit.prefactor == pytest.approx(0.8)


@pytest.mark.slow
@pytest.mark.parametrize("D, orders, slope", [
    (1, range(1, 9), 0.273),
    (2, range(1, 5), 0.260),
])
def test_be_ratio_growth_rate_at_marginal_relaxation(D, orders, slope):
    model = velocity_model(D)
    n = list(orders)
    ratios = [be_ratio_bound(0.5, k, D, norm_C(model, 0.5, k)) for k in n]
    fit = fit_be_ratio(n, ratios)
    assert fit.slope == pytest.approx(slope, abs=0.02)


def test_simplified_query_bound_dominates():
    for kappa in (10.0, 1e3, 1e6):
        for eps in (1e-2, 1e-3, 1e-6):
            bounds = query_bounds(kappa, 3.0, 2.0, eps)
            assert bounds.simplified >= bounds.rigorous
            assert bounds.simplified == pytest.approx(QUERY_SIMPLIFIED * 1.5 * kappa)


def test_query_bound_inputs():
    with pytest.raises(InvalidParameterError):
        query_bounds(0.5, 1.0, 1.0, 1e-3)
    with pytest.raises(InvalidParameterError):
        query_bounds(10.0, 1.0, 1.0, 1.0)
    lower = query_bounds(10.0, 1.0, 1.0, 1e-3, Re=100, beta=0.75, D=2).lower_proxy
    assert lower == pytest.approx(100 ** 1.5)


def test_query_bound_in_reynolds_number():
    assert query_bound_re(100, 4, 1.0, 1.0) == pytest.approx(85 * math.e * 100)
    # E / eps = e^4 with |Gamma| = 1 reproduces exp(N_C / 4) at N_C = 4
    assert query_bound_error(100, math.exp(4.0), -1.0, 1.0, 1.0, 1.0) == pytest.approx(85 * math.e * 100)
    with pytest.raises(InvalidParameterError):
        query_bound_error(100, 1.0, 0.0, 1e-3, 1.0, 1.0)


def test_best_case_speedups():
    comparison = classical_comparison(100, 0.5, 2, 1.0)
    assert comparison.speedup_best == pytest.approx(10.0)
    assert comparison.speedup_best_with_measurement == pytest.approx(100 ** 0.25)


@pytest.mark.parametrize("D, N_C, expected", [
    (2, 2, 0.314),
    (1, 4, -1.292),
    (1, 1, 0.333),
    (2, 1, 0.662),
])
def test_speedup_exponents(D, N_C, expected):
    chi, _ = lookup_condition_fit(D, N_C)
    comparison = classical_comparison(1000, 0.75, D, chi)
    assert comparison.lam == pytest.approx(expected, abs=5e-4)
    assert comparison.lam_with_measurement == pytest.approx(expected - 0.375, abs=5e-4)
    assert comparison.advantage == (expected > 0)


def test_classical_counts():
    comparison = classical_comparison(100, 0.75, 2, 1.9, N_x=32)
    assert comparison.q_c == pytest.approx(100 ** 2.25)
    assert comparison.classical_bits == 32 * 32 * 9 * 64
    assert lookup_condition_fit(3, 1) is None


def test_success_probabilities():
    assert p_first_block(1.0, 4) == pytest.approx(0.25)
    assert p_first_block(0.5, 2) == pytest.approx(0.75 / (1 - 0.0625))
    assert p_final(1.0, 1.0, 1) == pytest.approx(0.5)
    assert p_final(1.0, 1.0, 3) == pytest.approx(7 / 8)
    assert measurement_overhead(10_000, 0.5) == pytest.approx(10.0)
    with pytest.raises(InvalidParameterError):
        p_final(1.0, 1.0, 0)


def test_cost_report_assembly():
    report = build_cost_report(1000, 0.75, 2, 2, 10, 0.6, 5.0, 1.936, 5.46, N_x=178, T_star=2372)
    assert report.kappa == pytest.approx(5.46 * 1000 ** 1.936)
    assert report.classical.lam == pytest.approx(0.314)
    assert report.queries.simplified == pytest.approx(
        85 * report.prefactors.alpha_A / math.sqrt(26.0) * report.kappa
    )
    assert report.classical.quantum_qubits == report.qubits.n_D + report.qubits.n_A
    assert report.probabilities.q_M == pytest.approx(1000 ** 0.375)
