"""Tests for dense block encodings and their prefactor bookkeeping."""

import numpy as np
import pytest

from carleman_lbm.block_encoding import (
    BlockEncoding,
    block_diagonal,
    collision_encodings,
    dilation,
    householder_prepare,
    linear_combination,
    pad_square,
    rotation,
)
from carleman_lbm.carleman import build_collision_matrices
from carleman_lbm.errors import InvalidParameterError


def _random_encoding(rng, s=4, slack=1.1):
    A = rng.normal(size=(s, s))
    return A, dilation(A, slack * np.linalg.norm(A, 2))


def test_dilation_is_unitary_and_holds_the_block(rng):
    A, enc = _random_encoding(rng)
    assert enc.n_ancilla == 1
    assert enc.unitarity_error() <= 1e-12
    np.testing.assert_allclose(enc.block(), A, atol=1e-12)


def test_dilation_defaults_to_the_spectral_norm(rng):
    A = rng.normal(size=(3, 3))
    enc = dilation(A)
    assert enc.alpha == pytest.approx(np.linalg.norm(A, 2))
    assert enc.unitarity_error() <= 1e-6


def test_dilation_rejects_bad_inputs(rng):
    A = rng.normal(size=(3, 3))
    with pytest.raises(InvalidParameterError):
        dilation(A, 0.5 * np.linalg.norm(A, 2))
    with pytest.raises(InvalidParameterError):
        dilation(np.ones((2, 3)))


def test_linear_combination_sums_blocks(rng):
    parts = [_random_encoding(rng) for _ in range(3)]
    lcu = linear_combination([enc for _, enc in parts])
    assert lcu.alpha == pytest.approx(sum(enc.alpha for _, enc in parts))
    # two index qubits for three terms, one inner ancilla
    assert lcu.n_ancilla == 3
    assert lcu.unitarity_error() <= 1e-12
    np.testing.assert_allclose(lcu.block(), sum(A for A, _ in parts), atol=1e-11)


def test_single_term_combination_keeps_the_encoding(rng):
    A, enc = _random_encoding(rng)
    lcu = linear_combination([enc])
    assert lcu.n_ancilla == 1
    np.testing.assert_allclose(lcu.block(), A, atol=1e-12)


def test_block_diagonal(rng):
    parts = [_random_encoding(rng, slack=s) for s in (1.1, 2.0)]
    enc = block_diagonal([e for _, e in parts])
    assert enc.alpha == pytest.approx(max(e.alpha for _, e in parts))
    assert enc.n_ancilla == 2
    assert enc.block_size == 8
    assert enc.unitarity_error() <= 1e-12
    expected = np.zeros((8, 8))
    expected[:4, :4] = parts[0][0]
    expected[4:, 4:] = parts[1][0]
    np.testing.assert_allclose(enc.block(), expected, atol=1e-11)


def test_mismatched_sizes_are_rejected(rng):
    _, small = _random_encoding(rng, s=2)
    _, large = _random_encoding(rng, s=4)
    with pytest.raises(InvalidParameterError):
        linear_combination([small, large])
    with pytest.raises(InvalidParameterError):
        block_diagonal([])


def test_householder_and_rotation():
    p = np.array([0.6, 0.0, 0.8, 0.0])
    P = householder_prepare(p)
    np.testing.assert_allclose(P[:, 0], p, atol=1e-15)
    np.testing.assert_allclose(P.T @ P, np.eye(4), atol=1e-14)
    np.testing.assert_array_equal(householder_prepare(np.array([1.0, 0.0])), np.eye(2))

    R = rotation(0.25)
    assert R[0, 0] == 0.25
    np.testing.assert_allclose(R.T @ R, np.eye(2), atol=1e-15)
    with pytest.raises(InvalidParameterError):
        rotation(1.5)


def test_padding(rng):
    _, enc = _random_encoding(rng, s=2)
    padded = enc.padded(3)
    assert padded.unitary.shape == (16, 16)
    np.testing.assert_allclose(padded.block(), enc.block(), atol=1e-15)
    assert enc.padded(1) is enc
    with pytest.raises(InvalidParameterError):
        enc.padded(0)
    assert pad_square(np.ones((2, 3))).shape == (3, 3)


@pytest.mark.parametrize("tau", [0.6, 1.0])
def test_collision_encodings_at_closed_form_prefactors(d1q3, tau):
    linear, quadratic = collision_encodings(d1q3, tau)
    matrices = build_collision_matrices(d1q3, tau)
    # prefactor equals the norm, so the defect square roots lose half the digits
    assert linear.unitarity_error() <= 1e-6
    assert quadratic.unitarity_error() <= 1e-6
    np.testing.assert_allclose(linear.block(), matrices.IF1, atol=1e-12)
    np.testing.assert_allclose(quadratic.block()[:3, :9], matrices.F2_tilde, atol=1e-12)
    assert isinstance(linear, BlockEncoding)
