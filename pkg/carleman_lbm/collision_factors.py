"""
Factorizations of the single-site collision matrices.

I + F1~ is factored by an ordinary SVD. F2~ is factored as
L2 Sigma2 (R2 (x) R2)^T from a higher-order SVD of the (Q, Q, Q) tensor,
both numerically and from the closed-form tables for D1Q3 and D2Q9.
"""

import logging
from typing import List

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict

from carleman_lbm.carleman import build_collision_matrices
from carleman_lbm.errors import OutOfScopeError
from carleman_lbm.lattice_model import VelocityModel, velocity_model

logger = logging.getLogger("carleman_lbm")

_S2 = np.sqrt(2.0)
_S3 = np.sqrt(3.0)
_S6 = np.sqrt(6.0)


class SVDFactors(BaseModel):
    """M = L diag(sigma) R^T."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    L: np.ndarray
    sigma: np.ndarray
    R: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.L * self.sigma) @ self.R.T


class QuadraticFactors(BaseModel):
    """F2~ = L2 Sigma2 (R2 (x) R2)^T with orthogonal L2, R2 and a (Q, Q^2) core."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    L2: np.ndarray
    Sigma2: np.ndarray
    R2: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return self.L2 @ self.Sigma2 @ np.kron(self.R2, self.R2).T

    @property
    def core_nonzeros(self) -> int:
        return int(np.count_nonzero(np.abs(self.Sigma2) > 1e-12))


class HOSVDResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    core: np.ndarray
    factors: List[np.ndarray]
    mode_singular_values: List[np.ndarray]


def unfold(tensor: np.ndarray, mode: int) -> np.ndarray:
    """Mode-n unfolding: rows indexed by axis ``mode``."""
    return np.moveaxis(tensor, mode, 0).reshape(tensor.shape[mode], -1)


def hosvd(tensor: np.ndarray) -> HOSVDResult:
    """Higher-order SVD: one SVD per unfolding, core = tensor x_n U_n^T over every mode."""
    factors = []
    values = []
    for mode in range(tensor.ndim):
        u, s, _ = scipy.linalg.svd(unfold(tensor, mode))
        factors.append(u)
        values.append(s)
    core = tensor
    for mode, u in enumerate(factors):
        core = np.moveaxis(np.tensordot(u.T, core, axes=([1], [mode])), 0, mode)
    return HOSVDResult(core=core, factors=factors, mode_singular_values=values)


def linear_factors(model: VelocityModel, tau_bar_star: float) -> SVDFactors:
    """SVD of I + F1~."""
    IF1 = build_collision_matrices(model, tau_bar_star).IF1
    u, s, vh = scipy.linalg.svd(IF1)
    return SVDFactors(L=u, sigma=s, R=vh.T)


def quadratic_factors_numeric(model: VelocityModel, tau_bar_star: float) -> QuadraticFactors:
    """L2 from the output-mode unfolding, R2 from an input-mode unfolding of F2~."""
    F2 = build_collision_matrices(model, tau_bar_star).F2_tensor
    result = hosvd(F2)
    L2, R2 = result.factors[0], result.factors[1]
    Sigma2 = L2.T @ F2.reshape(model.Q, -1) @ np.kron(R2, R2)
    return QuadraticFactors(L2=L2, Sigma2=Sigma2, R2=R2)


def _d1_tables(tau: float):
    L2 = np.array([
        [-np.sqrt(2.0 / 3.0), 0.0, 1 / _S3],
        [1 / _S6, 1 / _S2, 1 / _S3],
        [1 / _S6, -1 / _S2, 1 / _S3],
    ])
    R2 = np.array([
        [0.0, 1.0, 0.0],
        [1 / _S2, 0.0, 1 / _S2],
        [-1 / _S2, 0.0, 1 / _S2],
    ])
    Sigma2 = np.zeros((3, 9))
    Sigma2[0, 0] = _S6 / tau
    return L2, Sigma2, R2


def _d2_tables(tau: float):
    a = 1 / (2 * _S3)
    b = 1 / _S3
    c = 1 / np.sqrt(15.0)
    d = 1 / np.sqrt(30.0)
    r35 = np.sqrt(3.0 / 5.0)
    r56 = np.sqrt(5.0 / 6.0)
    # Rows are the columns of R2.
    R2_rows = np.array([
        [0, -a, a, -a, a, -b, 0, 0, b],
        [0, -a, a, a, -a, 0, -b, b, 0],
        [0, b, 0, b, 0, 0, 0, 0, b],
        [0, b, 0, -b, 0, 0, 0, b, 0],
        [0, -c, 0, c, 0, 0, r35, 2 * c, 0],
        [0, -c, 0, -c, 0, r35, 0, 0, 2 * c],
        [0, 0, 0, d, r56, d, -d, d, -d],
        [0, d, r56, 0, 0, d, d, -d, -d],
        [1, 0, 0, 0, 0, 0, 0, 0, 0],
    ])

    s595 = np.sqrt(595.0)
    s1855 = np.sqrt(1855.0)
    s106 = np.sqrt(106.0)
    u = 1 / (6 * _S2)
    tail = [-1 / (2 * s595), -1 / (2 * s1855), -1 / (6 * s106)]
    L2 = np.array([
        [-2 * _S2 / 3, 0, 0, 0, 1 / 5, 2 * np.sqrt(2 / 17) / 5, 4 / s595, 4 / s1855, 2 * np.sqrt(2 / 53) / 3],
        [u, -1 / 2, 0, 0, 0, 0, np.sqrt(17 / 35), 17 / s1855, -19 / (6 * s106)],
        [u, -1 / 2, 0, 0, 0, 0, 0, 0, np.sqrt(53 / 2) / 6],
        [u, 1 / 2, 0, 0, 0, 0, 0, np.sqrt(35 / 53), 17 / (6 * s106)],
        [u, 1 / 2, 0, 0, 0, 0, np.sqrt(17 / 35), -18 / s1855, 17 / (6 * s106)],
        [u, 0, 1 / 2, -1 / _S2, 2 / 5, 4 * np.sqrt(2 / 17) / 5, *tail],
        [u, 0, -1 / 2, 0, 0, 5 / np.sqrt(34.0), *tail],
        [u, 0, -1 / 2, 0, 4 / 5, -9 / (5 * np.sqrt(34.0)), *tail],
        [u, 0, 1 / 2, 1 / _S2, 2 / 5, 4 * np.sqrt(2 / 17) / 5, *tail],
    ])

    Sigma2 = np.zeros((9, 81))
    Sigma2[0, 0] = Sigma2[0, 10] = 3 * _S2 / tau
    Sigma2[1, 1] = Sigma2[1, 9] = -3 / tau
    Sigma2[2, 0] = 1.5 / tau
    Sigma2[2, 10] = -1.5 / tau
    return L2, Sigma2, R2_rows.T


def quadratic_factors_explicit(D: int, tau_bar_star: float) -> QuadraticFactors:
    """
    Closed-form L2, Sigma2, R2 in the package's velocity ordering.

    Raises:
        OutOfScopeError: for D = 3
    """
    if D == 1:
        L2, Sigma2, R2 = _d1_tables(tau_bar_star)
    elif D == 2:
        L2, Sigma2, R2 = _d2_tables(tau_bar_star)
    else:
        raise OutOfScopeError(f"no closed-form collision factors for D={D}")
    return QuadraticFactors(L2=L2, Sigma2=Sigma2, R2=R2)


def singular_value_multiplicities(sigma: np.ndarray, tol: float = 1e-10) -> List[int]:
    """Group sorted singular values into clusters closer than ``tol``; returns sorted cluster sizes."""
    values = np.sort(np.asarray(sigma))
    sizes = [1]
    for prev, cur in zip(values[:-1], values[1:]):
        if abs(cur - prev) <= tol * max(1.0, abs(cur)):
            sizes[-1] += 1
        else:
            sizes.append(1)
    return sorted(sizes)


def verify_factors(D: int, tau_bar_star: float) -> float:
    """Max-abs reconstruction error of the closed-form factors against F2~."""
    F2 = build_collision_matrices(velocity_model(D), tau_bar_star).F2_tilde
    error = float(np.max(np.abs(quadratic_factors_explicit(D, tau_bar_star).reconstruct() - F2)))
    logger.debug(f"closed-form F2 factors for D={D}, tau={tau_bar_star}: max error {error:.2e}")
    return error
