"""History and final time-block linear systems, their condition numbers and bound ingredients."""

import logging
import math
from typing import Callable, List, Literal, Optional, Sequence, Union

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from pydantic import BaseModel
from scipy.sparse.linalg import LinearOperator, svds

from carleman_lbm.carleman import (
    DEFAULT_MAX_MEM,
    CarlemanOperator,
    CarlemanVector,
    assemble_collision,
    assembled_bytes,
    build_collision_matrices,
    carleman_dimension,
)
from carleman_lbm.errors import InvalidParameterError, NumericalError, check_capacity
from carleman_lbm.lattice_model import LatticeGeometry, VelocityModel

logger = logging.getLogger("carleman_lbm")

# Dense SVDs of the single-site collision matrix are used up to this size
DENSE_SVD_LIMIT = 512 * 1024 ** 2


class TimeBlockSystem:
    """
    Unit block-lower-bidiagonal system over T*+1 evolution rows.

    Row 0 holds the identity, rows 1..T* couple to the previous row through -S C.
    The final kind appends (2^W - 1)(T*+1) idle rows coupled through -I.
    """

    def __init__(
        self,
        op: CarlemanOperator,
        T_star: int,
        kind: Literal["history", "final"] = "history",
        W: int = 0,
    ):
        if T_star < 0:
            raise InvalidParameterError(f"T* must be >= 0, got {T_star}")
        if kind not in ("history", "final"):
            raise InvalidParameterError(f"Unknown system kind '{kind}'")
        if kind == "final" and W < 1:
            raise InvalidParameterError(f"final systems need W >= 1, got {W}")
        self.op = op
        self.T_star = T_star
        self.kind = kind
        self.W = W if kind == "final" else 0

    @property
    def d_C(self) -> int:
        return self.op.d_C

    @property
    def n_blocks(self) -> int:
        if self.kind == "history":
            return self.T_star + 1
        return 2 ** self.W * (self.T_star + 1)

    @property
    def dimension(self) -> int:
        return self.d_C * self.n_blocks

    def _blocks(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if x.size != self.dimension:
            raise InvalidParameterError(
                f"vector of length {x.size} does not match system dimension {self.dimension}"
            )
        return x.reshape(self.n_blocks, self.d_C)

    def initial_rhs(self, y0: CarlemanVector) -> np.ndarray:
        """b = (y_ini, 0, ..., 0)."""
        b = np.zeros((self.n_blocks, self.d_C), dtype=y0.flat.dtype)
        b[0] = y0.flat
        return b.ravel()

    def apply_A(self, x: np.ndarray) -> np.ndarray:
        X = self._blocks(x)
        T = self.T_star
        out = X.copy()
        for t in range(1, T + 1):
            out[t] -= self.op.matvec(X[t - 1])
        out[T + 1:] -= X[T:-1]
        return out.ravel()

    def apply_A_adjoint(self, z: np.ndarray) -> np.ndarray:
        Z = self._blocks(z)
        T = self.T_star
        out = Z.copy()
        for t in range(T):
            out[t] -= self.op.rmatvec(Z[t + 1])
        out[T:-1] -= Z[T + 1:]
        return out.ravel()

    def solve_A(self, b: np.ndarray) -> np.ndarray:
        """Forward block substitution z_t = S C z_{t-1} + b_t; idle rows repeat the previous block."""
        B = self._blocks(b)
        Z = np.empty_like(B, dtype=np.result_type(B, np.float64))
        Z[0] = B[0]
        for t in range(1, self.T_star + 1):
            Z[t] = self.op.matvec(Z[t - 1]) + B[t]
        for j in range(self.T_star + 1, self.n_blocks):
            Z[j] = Z[j - 1] + B[j]
        return Z.ravel()

    def solve_A_adjoint(self, b: np.ndarray) -> np.ndarray:
        """Backward block substitution for A^T z = b."""
        B = self._blocks(b)
        Z = np.empty_like(B, dtype=np.result_type(B, np.float64))
        last = self.n_blocks - 1
        Z[last] = B[last]
        for j in range(last - 1, self.T_star - 1, -1):
            Z[j] = Z[j + 1] + B[j]
        for t in range(self.T_star - 1, -1, -1):
            Z[t] = self.op.rmatvec(Z[t + 1]) + B[t]
        return Z.ravel()

    def as_linear_operator(self) -> LinearOperator:
        n = self.dimension
        return LinearOperator((n, n), matvec=self.apply_A, rmatvec=self.apply_A_adjoint,
                              dtype=np.float64)

    def inverse_normal_operator(self) -> LinearOperator:
        """(A^-1)^T A^-1 applied through two substitution solves."""
        n = self.dimension

        def matvec(x):
            return self.solve_A_adjoint(self.solve_A(np.ravel(x)))

        return LinearOperator((n, n), matvec=matvec, rmatvec=matvec)

    def assemble(self, max_bytes: Optional[int] = DEFAULT_MAX_MEM) -> sp.csr_matrix:
        """Sparse A for small instances."""
        SC = self.op.assembled().SC
        check_capacity(
            12 * SC.nnz * self.T_star + 12 * self.dimension, max_bytes,
            "assembled time-block system", N_C=self.op.N_C, T_star=self.T_star,
        )
        n = self.n_blocks
        coupling = sp.diags(np.ones(n - 1), -1, shape=(n, n), format="csr")
        evolution = sp.diags(
            (np.arange(1, n) <= self.T_star).astype(float), -1, shape=(n, n), format="csr"
        )
        idle = coupling - evolution
        identity = sp.identity(self.d_C, format="csr")
        A = (
            sp.identity(self.dimension, format="csr")
            - sp.kron(evolution, SC, format="csr")
            - sp.kron(idle, identity, format="csr")
        )
        return A.tocsr()


class LanczosResult(BaseModel):
    value: float
    iterations: int
    converged: bool
    residual: float
    history: List[float]


def lanczos_largest(
    operator: Union[LinearOperator, Callable[[np.ndarray], np.ndarray]],
    n: int,
    tol: float = 1e-8,
    max_iter: int = 400,
    v0: Optional[np.ndarray] = None,
    window: int = 5,
    max_mem: Optional[int] = DEFAULT_MAX_MEM,
) -> LanczosResult:
    """
    Largest eigenvalue of a symmetric positive semi-definite operator.

    Lanczos with full reorthogonalization of every new vector against the
    stored basis. Stops when the top Ritz value changes by at most ``tol``
    (relative) over ``window`` iterations, or on an invariant subspace.

    Args:
        operator: LinearOperator or callable computing A @ x
        n: Operator dimension
        tol: Relative convergence tolerance on the top Ritz value
        max_iter: Iteration cap
        v0: Start vector (default: all ones, normalized)
        window: Number of iterations the change is measured over
        max_mem: Byte cap on the stored Lanczos basis

    Returns:
        LanczosResult with the Ritz value history and the final residual estimate
    """
    if tol <= 0:
        raise InvalidParameterError(f"Lanczos tolerance must be positive, got {tol}")
    matvec = operator.matvec if isinstance(operator, LinearOperator) else operator
    max_iter = max(1, min(max_iter, n))
    check_capacity(8 * n * (max_iter + 1), max_mem, "Lanczos basis", n=n, max_iter=max_iter)

    q = np.ones(n) if v0 is None else np.asarray(v0, dtype=np.float64).copy()
    q /= np.linalg.norm(q)
    basis = np.zeros((max_iter + 1, n))
    basis[0] = q
    alphas: List[float] = []
    betas: List[float] = []
    history: List[float] = []
    converged = False
    beta = 0.0

    for j in range(max_iter):
        w = np.asarray(matvec(basis[j]), dtype=np.float64).ravel()
        if not np.all(np.isfinite(w)):
            raise NumericalError("Non-finite operator output during Lanczos", step=j)
        alpha = float(basis[j] @ w)
        w -= alpha * basis[j]
        if j > 0:
            w -= beta * basis[j - 1]
        w -= basis[:j + 1].T @ (basis[:j + 1] @ w)
        alphas.append(alpha)

        if betas:
            ritz = scipy.linalg.eigh_tridiagonal(
                np.array(alphas), np.array(betas), eigvals_only=True
            )
            top = float(ritz[-1])
        else:
            top = alpha
        history.append(top)

        beta = float(np.linalg.norm(w))
        if beta <= 1e-12 * max(1.0, abs(top)):
            converged = True
            break
        if len(history) > window and abs(history[-1] - history[-1 - window]) <= tol * abs(history[-1]):
            converged = True
            break
        betas.append(beta)
        basis[j + 1] = w / beta

    k = len(alphas)
    if k > 1:
        _, vectors = scipy.linalg.eigh_tridiagonal(np.array(alphas), np.array(betas[:k - 1]))
        residual = abs(beta * vectors[-1, -1])
    else:
        residual = beta
    if not converged:
        logger.warning(f"Lanczos did not converge in {k} iterations (last value {history[-1]:.6e})")
    return LanczosResult(
        value=history[-1], iterations=k, converged=converged, residual=float(residual), history=history
    )


def norm_C(
    model: VelocityModel,
    tau_bar_star: float,
    N_C: int,
    dense_limit: Optional[int] = DENSE_SVD_LIMIT,
    max_mem: Optional[int] = DEFAULT_MAX_MEM,
) -> float:
    """
    Spectral norm of the Carleman collision matrix, computed on a single lattice site.

    The collision matrix is site-local, so the value holds for any lattice size.
    tau = 1/2 is accepted.
    """
    matrices = build_collision_matrices(model, tau_bar_star)
    dim = carleman_dimension(model.Q, N_C)
    if dense_limit is None or 8 * dim * dim <= dense_limit:
        C = assemble_collision(matrices, 1, N_C).toarray()
        return float(scipy.linalg.svdvals(C)[0])

    check_capacity(
        assembled_bytes(matrices, 1, N_C), max_mem, "single-site collision matrix", N_C=N_C, Q=model.Q
    )
    C = assemble_collision(matrices, 1, N_C)
    logger.debug(f"norm_C via svds on a {dim}x{dim} sparse matrix")
    return float(svds(C, k=1, return_singular_vectors=False)[0])


def kappa_lower(norm_C_value: float, T_star: int) -> float:
    """kappa >= ||C|| T* / sqrt(3)."""
    return norm_C_value * T_star / math.sqrt(3.0)


def kappa_upper_history(norm_C_value: float, power_norms: Sequence[float], T_star: int) -> float:
    """(||C||+1) sqrt(sum_t (T*-t+1) ||(SC)^t||^2), t = 0..T*."""
    _check_power_norms(power_norms, T_star)
    total = sum((T_star - t + 1) * power_norms[t] ** 2 for t in range(T_star + 1))
    return (norm_C_value + 1.0) * math.sqrt(total)


def kappa_upper_final(
    norm_C_value: float, power_norms: Sequence[float], T_star: int, W: int
) -> float:
    """(||C||+1) sqrt(sum_t (2^W (T*+1) - t) ||(SC)^t||^2 + 2^(2W-1) (T*+1)^2)."""
    _check_power_norms(power_norms, T_star)
    rows = 2 ** W * (T_star + 1)
    total = sum((rows - t) * power_norms[t] ** 2 for t in range(T_star + 1))
    total += 2.0 ** (2 * W - 1) * (T_star + 1) ** 2
    return (norm_C_value + 1.0) * math.sqrt(total)


def _check_power_norms(power_norms: Sequence[float], T_star: int) -> None:
    if len(power_norms) < T_star + 1:
        raise InvalidParameterError(
            f"need ||(SC)^t|| for t = 0..{T_star}, got {len(power_norms)} values"
        )


def power_norms(
    op: CarlemanOperator,
    T_star: int,
    method: Literal["dense", "lanczos"] = "dense",
    tol: float = 1e-10,
    max_iter: int = 200,
    max_mem: Optional[int] = DEFAULT_MAX_MEM,
) -> np.ndarray:
    """
    ||(S C)^t|| for t = 0..T*.

    The dense method multiplies out the powers; the Lanczos method estimates
    each norm from the top eigenvalue of ((SC)^t)^T (SC)^t applied matrix-free.
    """
    n = op.d_C
    if method == "dense":
        check_capacity(16 * n * n, max_mem, "dense powers of S C", N_C=op.N_C, d_C=n)
        M = op.assembled().SC.toarray()
        P = np.eye(n)
        norms = []
        for _ in range(T_star + 1):
            norms.append(float(scipy.linalg.svdvals(P)[0]))
            P = M @ P
        return np.array(norms)

    norms = [1.0]
    for t in range(1, T_star + 1):
        def normal(x, t=t):
            for _ in range(t):
                x = op.matvec(x)
            for _ in range(t):
                x = op.rmatvec(x)
            return x

        result = lanczos_largest(normal, n, tol=tol, max_iter=max_iter, max_mem=max_mem)
        norms.append(math.sqrt(max(result.value, 0.0)))
    return np.array(norms)


class ConditionEstimate(BaseModel):
    """Condition-number estimate of a time-block system."""

    norm_C: float
    norm_A_lower: float
    norm_A_upper: float
    norm_Ainv: float
    iterations: int
    converged: bool
    residual: float
    kappa: float
    kappa_lower: float
    kappa_upper: Optional[float] = None

    @property
    def within_bounds(self) -> bool:
        upper_ok = self.kappa_upper is None or self.kappa <= self.kappa_upper * (1 + 1e-9)
        return self.kappa >= self.kappa_lower * (1 - 1e-9) and upper_ok


def condition_number(
    system: TimeBlockSystem,
    norm_C_value: Optional[float] = None,
    tol: float = 1e-8,
    max_iter: int = 400,
    power_norm_values: Optional[Sequence[float]] = None,
    max_mem: Optional[int] = DEFAULT_MAX_MEM,
    v0: Optional[np.ndarray] = None,
) -> ConditionEstimate:
    """
    kappa = (1 + ||C||) sigma_max(A^-1), with sigma_max from Lanczos on (A^-1)^T A^-1.

    Args:
        system: History or final system
        norm_C_value: ||C|| if already known (computed on one site otherwise)
        tol, max_iter: Lanczos settings
        power_norm_values: ||(SC)^t|| for t = 0..T*; enables the upper bound
        max_mem: Byte cap on the Lanczos basis
        v0: Lanczos start vector (all ones by default)

    Returns:
        ConditionEstimate including the analytic lower bound
    """
    op = system.op
    if norm_C_value is None:
        norm_C_value = norm_C(op.model, op.matrices.tau_bar_star, op.N_C, max_mem=max_mem)

    logger.info(
        f"Lanczos on (A^-1)^T A^-1: kind={system.kind} dim={system.dimension} "
        f"T*={system.T_star} N_C={op.N_C}"
    )
    result = lanczos_largest(
        system.inverse_normal_operator(), system.dimension,
        tol=tol, max_iter=max_iter, v0=v0, max_mem=max_mem,
    )
    norm_Ainv = math.sqrt(max(result.value, 0.0))
    kappa = (1.0 + norm_C_value) * norm_Ainv

    upper = None
    if power_norm_values is not None:
        if system.kind == "history":
            upper = kappa_upper_history(norm_C_value, power_norm_values, system.T_star)
        else:
            upper = kappa_upper_final(norm_C_value, power_norm_values, system.T_star, system.W)

    estimate = ConditionEstimate(
        norm_C=norm_C_value,
        norm_A_lower=math.sqrt(1.0 + norm_C_value ** 2),
        norm_A_upper=1.0 + norm_C_value,
        norm_Ainv=norm_Ainv,
        iterations=result.iterations,
        converged=result.converged,
        residual=result.residual,
        kappa=kappa,
        kappa_lower=kappa_lower(norm_C_value, system.T_star),
        kappa_upper=upper,
    )
    logger.info(f"kappa={kappa:.6e} after {result.iterations} iterations (converged={result.converged})")
    return estimate


def dense_condition_number(
    system: TimeBlockSystem, norm_C_value: float, max_mem: Optional[int] = DEFAULT_MAX_MEM
) -> float:
    """(1 + ||C||) / sigma_min(A) from a dense SVD; small instances only."""
    n = system.dimension
    check_capacity(24 * n * n, max_mem, "dense time-block system", dimension=n)
    sigma = scipy.linalg.svdvals(system.assemble(max_mem).toarray())
    return (1.0 + norm_C_value) / float(sigma[-1])


# Antisymmetric F1 kernel vectors used to tile the D2Q9 alternating eigenstate.
_PSI_PI_D2 = (
    np.array([0, -2, 2, -2, 2, -1, 0, 0, 1], dtype=np.float64),
    np.array([0, -2, 2, 2, -2, 0, -1, 1, 0], dtype=np.float64),
)


def _alternating_first_block(model: VelocityModel, geom: LatticeGeometry) -> np.ndarray:
    if any(n % 2 for n in geom.shape):
        raise InvalidParameterError(f"alternating eigenstate needs even lattice sizes, got {geom.shape}")
    coords = geom.coordinates
    if model.dimension == 1:
        sign = np.where(coords[:, 0] % 2 == 0, 1.0, -1.0)
        block = sign[:, None] * np.array([0.0, 1.0, -1.0])
    elif model.dimension == 2:
        psi1, psi2 = _PSI_PI_D2
        x_odd = coords[:, 0] % 2 == 1
        y_odd = coords[:, 1] % 2 == 1
        block = np.empty((geom.N, model.Q))
        block[~y_odd & ~x_odd] = -psi1
        block[~y_odd & x_odd] = psi2
        block[y_odd & ~x_odd] = -psi2
        block[y_odd & x_odd] = psi1
    else:
        raise InvalidParameterError("the alternating eigenstate is only built for D = 1 and D = 2")
    block[geom.wall_mask] = 0.0
    return block.ravel()


def eigenstate_xi(
    theta: float, model: VelocityModel, geom: LatticeGeometry, N_C: int, tau_bar_star: float = 1.0
) -> CarlemanVector:
    """
    Normalized eigenvector of S C with eigenvalue exp(i theta), theta in {0, pi}.

    Only the first block is populated. theta = 0 tiles a kernel vector of F1~
    uniformly and needs a wall-free lattice; theta = pi uses an alternating
    momentum pattern that is zero on wall nodes and reflects at bounce-back links.
    """
    if math.isclose(theta, 0.0, abs_tol=1e-12):
        if geom.has_walls:
            raise InvalidParameterError("the theta = 0 eigenstate requires a lattice without walls")
        F1 = build_collision_matrices(model, tau_bar_star).F1_tilde
        kernel = scipy.linalg.null_space(F1, rcond=1e-10)
        if kernel.shape[1] == 0:
            raise NumericalError("F1 has no numerical kernel at tolerance 1e-10")
        first = np.tile(kernel[:, 0], geom.N)
    elif math.isclose(theta, math.pi, abs_tol=1e-12):
        first = _alternating_first_block(model, geom)
    else:
        raise InvalidParameterError(f"theta must be 0 or pi, got {theta}")

    d = geom.N * model.Q
    blocks = [first / np.linalg.norm(first)]
    blocks += [np.zeros(d ** k) for k in range(2, N_C + 1)]
    return CarlemanVector(d=d, blocks=blocks)


def witness_ratio_bound(T_star: int) -> float:
    """sqrt((T*+2)(2T*+3)/6), the growth of A^-1 on the eigenstate witness of the history system."""
    return math.sqrt((T_star + 2) * (2 * T_star + 3) / 6.0)


def lower_bound_witness(system: TimeBlockSystem, theta: float) -> float:
    """
    ||A^-1 x|| / ||x|| for x_t = exp(i theta t) xi_theta on the evolution rows.

    Returns a value >= witness_ratio_bound(T*) >= T*/sqrt(3).
    """
    op = system.op
    xi = eigenstate_xi(theta, op.model, op.geom, op.N_C, op.matrices.tau_bar_star).flat
    X = np.zeros((system.n_blocks, system.d_C))
    for t in range(system.T_star + 1):
        X[t] = math.cos(theta * t) * xi
    x = X.ravel()
    return float(np.linalg.norm(system.solve_A(x)) / np.linalg.norm(x))
