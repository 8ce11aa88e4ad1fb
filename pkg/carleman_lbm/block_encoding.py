"""
Explicit block encodings of small matrices.

A block encoding of A with prefactor alpha is a unitary U whose top-left
block is A / alpha. Index layout is ancilla-major: row ``a * s + x`` holds
ancilla basis state ``a`` and system index ``x``, so the encoded block is
``U[:s, :s]``. These routines build U densely and are meant for validating
prefactor and ancilla bookkeeping on matrices of a few hundred rows.
"""

import logging
import math
from typing import List, Optional, Sequence

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict

from carleman_lbm.carleman import build_collision_matrices
from carleman_lbm.cost_model import alpha_F2bar, alpha_IF1
from carleman_lbm.errors import InvalidParameterError
from carleman_lbm.lattice_model import VelocityModel

logger = logging.getLogger("carleman_lbm")

_NORM_SLACK = 1e-10


class BlockEncoding(BaseModel):
    """Dense unitary holding A / alpha in its top-left (block_size x block_size) corner."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    unitary: np.ndarray
    alpha: float
    n_ancilla: int
    block_size: int

    def block(self) -> np.ndarray:
        """The encoded matrix A, i.e. alpha times the top-left block."""
        s = self.block_size
        return self.alpha * self.unitary[:s, :s]

    def unitarity_error(self) -> float:
        U = self.unitary
        return float(np.max(np.abs(U.conj().T @ U - np.eye(U.shape[0]))))

    def padded(self, n_ancilla: int) -> "BlockEncoding":
        """Same encoding with extra idle ancillas placed above the existing ones."""
        extra = n_ancilla - self.n_ancilla
        if extra < 0:
            raise InvalidParameterError(f"cannot shrink {self.n_ancilla} ancillas to {n_ancilla}")
        if extra == 0:
            return self
        return BlockEncoding(
            unitary=np.kron(np.eye(2 ** extra), self.unitary),
            alpha=self.alpha, n_ancilla=n_ancilla, block_size=self.block_size,
        )


def psd_sqrt(M: np.ndarray) -> np.ndarray:
    """Square root of a Hermitian positive semidefinite matrix; tiny negative eigenvalues clip to 0."""
    values, vectors = scipy.linalg.eigh(M)
    root = np.sqrt(np.clip(values, 0.0, None))
    return (vectors * root) @ vectors.conj().T


def pad_square(M: np.ndarray) -> np.ndarray:
    """Zero-pad a rectangular matrix to a square one of the larger side."""
    rows, cols = M.shape
    n = max(rows, cols)
    out = np.zeros((n, n), dtype=M.dtype)
    out[:rows, :cols] = M
    return out


def dilation(A: np.ndarray, alpha: Optional[float] = None) -> BlockEncoding:
    """
    One-ancilla unitary dilation [[B, sqrt(I - B B^H)], [sqrt(I - B^H B), -B^H]] with B = A / alpha.

    Args:
        A: Square matrix
        alpha: Prefactor, at least the spectral norm of A; defaults to that norm

    Returns:
        BlockEncoding with one ancilla
    """
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidParameterError(f"dilation needs a square matrix, got shape {A.shape}")
    norm = float(np.linalg.norm(A, 2))
    if alpha is None:
        alpha = norm if norm > 0 else 1.0
    if alpha <= 0 or norm > alpha * (1 + _NORM_SLACK):
        raise InvalidParameterError(f"prefactor {alpha} is below the spectral norm {norm}")

    s = A.shape[0]
    B = A / alpha
    eye = np.eye(s)
    U = np.block([
        [B, psd_sqrt(eye - B @ B.conj().T)],
        [psd_sqrt(eye - B.conj().T @ B), -B.conj().T],
    ])
    return BlockEncoding(unitary=U, alpha=float(alpha), n_ancilla=1, block_size=s)


def householder_prepare(amplitudes: np.ndarray) -> np.ndarray:
    """Real orthogonal P with P e_0 equal to the given unit vector."""
    p = np.asarray(amplitudes, dtype=np.float64)
    n = p.size
    e0 = np.zeros(n)
    e0[0] = 1.0
    v = e0 - p
    vv = float(v @ v)
    if vv < 1e-30:
        return np.eye(n)
    return np.eye(n) - 2.0 * np.outer(v, v) / vv


def linear_combination(encodings: Sequence[BlockEncoding]) -> BlockEncoding:
    """
    Encode sum_i A_i with PREP^dagger SELECT PREP.

    The index register holds ceil(log2 k) qubits; PREP loads sqrt(alpha_i / alpha)
    and unused SELECT branches act as the identity.

    Returns:
        BlockEncoding with alpha = sum alpha_i and ceil(log2 k) + max n_i ancillas
    """
    encodings = list(encodings)
    if not encodings:
        raise InvalidParameterError("linear combination of zero terms")
    s = encodings[0].block_size
    if any(e.block_size != s for e in encodings):
        raise InvalidParameterError("all terms must encode matrices of the same size")

    k = len(encodings)
    n_index = math.ceil(math.log2(k)) if k > 1 else 0
    n_inner = max(e.n_ancilla for e in encodings)
    inner = [e.padded(n_inner) for e in encodings]
    dim = inner[0].unitary.shape[0]
    branches = 2 ** n_index

    alpha = sum(e.alpha for e in encodings)
    amplitudes = np.zeros(branches)
    amplitudes[:k] = np.sqrt([e.alpha / alpha for e in encodings])
    P = np.kron(householder_prepare(amplitudes), np.eye(dim))

    select = np.zeros((branches * dim, branches * dim), dtype=np.result_type(*[e.unitary for e in inner]))
    for i in range(branches):
        block = inner[i].unitary if i < k else np.eye(dim)
        select[i * dim:(i + 1) * dim, i * dim:(i + 1) * dim] = block

    U = P.T @ select @ P
    logger.debug(f"LCU of {k} terms: alpha={alpha:.6g}, ancillas={n_index + n_inner}")
    return BlockEncoding(unitary=U, alpha=alpha, n_ancilla=n_index + n_inner, block_size=s)


def rotation(c: float) -> np.ndarray:
    """Real 2x2 rotation with <0|R|0> = c."""
    if not -1.0 <= c <= 1.0:
        raise InvalidParameterError(f"rotation cosine must lie in [-1, 1], got {c}")
    s = math.sqrt(1.0 - c * c)
    return np.array([[c, -s], [s, c]])


def block_diagonal(encodings: Sequence[BlockEncoding]) -> BlockEncoding:
    """
    Encode diag(A_1, ..., A_k) from encodings of equally sized A_i.

    Each term is rescaled to the common prefactor max alpha_i by a rotation
    ancilla with cosine alpha_i / max alpha; the block index becomes part of the
    system register.

    Returns:
        BlockEncoding with alpha = max alpha_i and max n_i + 1 ancillas
    """
    encodings = list(encodings)
    if not encodings:
        raise InvalidParameterError("block-diagonal combination of zero blocks")
    s = encodings[0].block_size
    if any(e.block_size != s for e in encodings):
        raise InvalidParameterError("all blocks must encode matrices of the same size")

    k = len(encodings)
    n_inner = max(e.n_ancilla for e in encodings)
    alpha = max(e.alpha for e in encodings)
    n_ancilla = n_inner + 1
    A = 2 ** n_ancilla

    U = np.zeros((A, k, s, A, k, s), dtype=np.result_type(*[e.unitary for e in encodings]))
    for i, enc in enumerate(encodings):
        V = np.kron(rotation(enc.alpha / alpha), enc.padded(n_inner).unitary)
        U[:, i, :, :, i, :] = V.reshape(A, s, A, s)
    U = U.reshape(A * k * s, A * k * s)
    return BlockEncoding(unitary=U, alpha=alpha, n_ancilla=n_ancilla, block_size=k * s)


def collision_encodings(model: VelocityModel, tau_bar_star: float) -> List[BlockEncoding]:
    """
    Dilations of I + F1~ and of the square-padded F2~ at their closed-form prefactors.

    The closed-form prefactors equal the largest singular values, so each
    dilation is valid without slack.
    """
    matrices = build_collision_matrices(model, tau_bar_star)
    D = model.dimension
    linear = dilation(matrices.IF1, alpha_IF1(tau_bar_star, D))
    quadratic = dilation(pad_square(matrices.F2_tilde), alpha_F2bar(tau_bar_star, D))
    logger.debug(
        f"collision encodings {model.name}: alpha_IF1={linear.alpha:.6f}, alpha_F2={quadratic.alpha:.6f}"
    )
    return [linear, quadratic]
