"""
Truncated Carleman embedding of the shifted LBE.

Carleman block k holds the k-th tensor power of the state, stored flat with
length d^k (d = N*Q) and viewed as a tensor of shape (N, Q) * k. Collision
blocks C^k_l are applied matrix-free by walking the output slots in order:
an (I+F1) slot consumes one input slot, an F2 slot consumes two input slots
that must sit on the same lattice site.
"""

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, Field, field_validator

from carleman_lbm.errors import InvalidParameterError, NumericalError, check_capacity
from carleman_lbm.lattice_model import (
    FluidState,
    LatticeGeometry,
    VelocityModel,
    check_relaxation,
    linear_collision_matrix,
    quadratic_collision_tensor,
    streaming_source,
)

logger = logging.getLogger("carleman_lbm")

DEFAULT_MAX_MEM = 8 * 1024 ** 3
# Assembled matrices are built automatically only below this size
DEFAULT_SPARSE_LIMIT = 256 * 1024 ** 2


class CollisionMatrices(BaseModel):
    """Single-site collision matrices F1~ (Q x Q) and F2~ (Q x Q^2)."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    F1_tilde: np.ndarray
    F2_tilde: np.ndarray
    tau_bar_star: float

    @property
    def Q(self) -> int:
        return self.F1_tilde.shape[0]

    @property
    def IF1(self) -> np.ndarray:
        """I + F1~."""
        return np.eye(self.Q) + self.F1_tilde

    @property
    def F2_tensor(self) -> np.ndarray:
        """F2~ viewed as a (Q, Q, Q) tensor indexed [m, a, b]."""
        return self.F2_tilde.reshape(self.Q, self.Q, self.Q)


def build_collision_matrices(model: VelocityModel, tau_bar_star: float) -> CollisionMatrices:
    """
    Dense single-site collision matrices for the given relaxation time.

    tau = 1/2 is accepted here so that prefactor studies can reach the endpoint.
    """
    check_relaxation(tau_bar_star, allow_marginal=True)
    F1 = linear_collision_matrix(model, tau_bar_star)
    F2 = quadratic_collision_tensor(model, tau_bar_star).reshape(model.Q, model.Q ** 2)
    return CollisionMatrices(F1_tilde=F1, F2_tilde=F2, tau_bar_star=tau_bar_star)


def carleman_dimension(d: int, N_C: int) -> int:
    """d_C = d + d^2 + ... + d^N_C as an exact integer."""
    return sum(d ** k for k in range(1, N_C + 1))


class CarlemanVector(BaseModel):
    """Blocks y_1..y_{N_C} of a truncated Carleman vector, block k of length d^k."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    d: int = Field(ge=1)
    blocks: List[np.ndarray]

    @field_validator("blocks")
    @classmethod
    def _check_blocks(cls, blocks: List[np.ndarray]) -> List[np.ndarray]:
        if not blocks:
            raise ValueError("a Carleman vector needs at least one block")
        return [np.asarray(b).ravel() for b in blocks]

    @property
    def N_C(self) -> int:
        return len(self.blocks)

    @property
    def d_C(self) -> int:
        return carleman_dimension(self.d, self.N_C)

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate(self.blocks)

    @property
    def block_norms(self) -> np.ndarray:
        return np.array([np.linalg.norm(b) for b in self.blocks])

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.block_norms ** 2)))

    @classmethod
    def from_flat(cls, x: np.ndarray, d: int, N_C: int) -> "CarlemanVector":
        x = np.asarray(x)
        if x.size != carleman_dimension(d, N_C):
            raise InvalidParameterError(
                f"flat vector of length {x.size} does not match d={d}, N_C={N_C}"
            )
        blocks = []
        start = 0
        for k in range(1, N_C + 1):
            blocks.append(x[start:start + d ** k])
            start += d ** k
        return cls(d=d, blocks=blocks)

    @classmethod
    def zeros(cls, d: int, N_C: int, dtype=np.float64) -> "CarlemanVector":
        return cls(d=d, blocks=[np.zeros(d ** k, dtype=dtype) for k in range(1, N_C + 1)])


def carleman_initial(
    g0: FluidState, N_C: int, max_mem: Optional[int] = DEFAULT_MAX_MEM
) -> CarlemanVector:
    """
    Tensor powers y_k = g0^(x)k for k = 1..N_C.

    Args:
        g0: Initial populations
        N_C: Truncation order (>= 1)
        max_mem: Byte cap on the stored vector; None disables the check

    Returns:
        CarlemanVector with ||y_k|| = ||g0||^k
    """
    if N_C < 1:
        raise InvalidParameterError(f"truncation order must be >= 1, got {N_C}")
    d = g0.g.size
    check_capacity(8 * carleman_dimension(d, N_C), max_mem, "Carleman vector", d=d, N_C=N_C)

    blocks = [g0.g.copy()]
    for _ in range(1, N_C):
        blocks.append(np.multiply.outer(blocks[-1], g0.g).ravel())
    return CarlemanVector(d=d, blocks=blocks)


def placements(k: int, l: int) -> List[Tuple[int, ...]]:
    """Output slots carrying an F2 factor in each distinct term of C^k_l."""
    if not k <= l <= 2 * k:
        return []
    return list(itertools.combinations(range(k), l - k))


def _forward_placement(
    T: np.ndarray, k: int, f2_slots: Tuple[int, ...], IF1: np.ndarray, F2: np.ndarray
) -> np.ndarray:
    # Remaining input slots lead, finished output slots trail.
    for j in range(k):
        if j in f2_slots:
            diag = np.diagonal(T, axis1=0, axis2=2)  # (a, b, rest..., N)
            T = np.tensordot(diag, F2, axes=([0, 1], [1, 2]))  # (rest..., N, m)
        else:
            T = np.moveaxis(np.tensordot(T, IF1, axes=([1], [1])), 0, -2)
    return T


def _adjoint_placement(
    X: np.ndarray, k: int, f2_slots: Tuple[int, ...], IF1: np.ndarray, F2: np.ndarray
) -> np.ndarray:
    N, Q = X.shape[0], X.shape[1]
    sites = np.arange(N)
    for j in range(k):
        if j in f2_slots:
            val = np.tensordot(X, F2, axes=([1], [0]))  # (N, rest..., a, b)
            expanded = np.zeros(X.shape[2:] + (N, Q, N, Q), dtype=val.dtype)
            expanded[..., sites, :, sites, :] = val
            X = expanded
        else:
            X = np.moveaxis(np.tensordot(X, IF1, axes=([1], [0])), 0, -2)
    return X


class _Accumulator:
    """Plain or Kahan-compensated running sum of equally shaped arrays."""

    def __init__(self, compensated: bool):
        self.compensated = compensated
        self.total: Optional[np.ndarray] = None
        self._carry: Optional[np.ndarray] = None

    def add(self, term: np.ndarray) -> None:
        if self.total is None:
            self.total = term.copy()
            self._carry = np.zeros_like(term)
        elif self.compensated:
            y = term - self._carry
            t = self.total + y
            self._carry = (t - self.total) - y
            self.total = t
        else:
            self.total += term


class CarlemanOperator:
    """
    Truncated Carleman collision C and streaming S for one lattice, model and N_C.

    The operator is immutable after construction; assembled sparse forms are
    built lazily and cached.
    """

    def __init__(
        self,
        model: VelocityModel,
        geom: LatticeGeometry,
        tau_bar_star: float,
        N_C: int,
        compensated: bool = False,
        workers: int = 1,
        max_mem: Optional[int] = DEFAULT_MAX_MEM,
        sparse_limit: Optional[int] = DEFAULT_SPARSE_LIMIT,
    ):
        if N_C < 1:
            raise InvalidParameterError(f"truncation order must be >= 1, got {N_C}")
        self.model = model
        self.geom = geom
        self.N_C = N_C
        self.matrices = build_collision_matrices(model, tau_bar_star)
        self.compensated = compensated
        self.workers = max(1, workers)
        self.max_mem = max_mem
        self.sparse_limit = sparse_limit

        self.src = streaming_source(model, geom)
        self.src_inverse = np.empty_like(self.src)
        self.src_inverse[self.src] = np.arange(self.src.size)
        self._assembled: Optional["AssembledCarleman"] = None

    @property
    def N(self) -> int:
        return self.geom.N

    @property
    def Q(self) -> int:
        return self.model.Q

    @property
    def d(self) -> int:
        return self.N * self.Q

    @property
    def d_C(self) -> int:
        return carleman_dimension(self.d, self.N_C)

    def _check(self, y: CarlemanVector) -> None:
        if y.d != self.d or y.N_C != self.N_C:
            raise InvalidParameterError(
                f"Carleman vector (d={y.d}, N_C={y.N_C}) does not match operator "
                f"(d={self.d}, N_C={self.N_C})"
            )

    def _map_blocks(self, fn, count: int) -> List[np.ndarray]:
        if self.workers == 1 or count == 1:
            return [fn(k) for k in range(1, count + 1)]
        with ThreadPoolExecutor(max_workers=self.workers) as executor:
            return list(executor.map(fn, range(1, count + 1)))

    def collision_block(self, y: CarlemanVector, k: int) -> np.ndarray:
        """Block row k of C y: sum over l of C^k_l y_l."""
        shape = (self.N, self.Q)
        IF1 = self.matrices.IF1
        F2 = self.matrices.F2_tensor
        acc = _Accumulator(self.compensated)
        for l in range(k, min(2 * k, self.N_C) + 1):
            T = y.blocks[l - 1].reshape(shape * l)
            for f2_slots in placements(k, l):
                acc.add(_forward_placement(T, k, f2_slots, IF1, F2))
        return acc.total.ravel()

    def collision_adjoint_block(self, z: CarlemanVector, l: int) -> np.ndarray:
        """Block l of C^T z: sum over k of (C^k_l)^T z_k."""
        shape = (self.N, self.Q)
        IF1 = self.matrices.IF1
        F2 = self.matrices.F2_tensor
        acc = _Accumulator(self.compensated)
        for k in range((l + 1) // 2, l + 1):
            X = z.blocks[k - 1].reshape(shape * k)
            for f2_slots in placements(k, l):
                acc.add(_adjoint_placement(X, k, f2_slots, IF1, F2))
        return acc.total.ravel()

    def apply_collision(self, y: CarlemanVector) -> CarlemanVector:
        self._check(y)
        blocks = self._map_blocks(lambda k: self.collision_block(y, k), self.N_C)
        return CarlemanVector(d=self.d, blocks=blocks)

    def apply_collision_adjoint(self, z: CarlemanVector) -> CarlemanVector:
        self._check(z)
        blocks = self._map_blocks(lambda l: self.collision_adjoint_block(z, l), self.N_C)
        return CarlemanVector(d=self.d, blocks=blocks)

    def _permute(self, y: CarlemanVector, index: np.ndarray) -> CarlemanVector:
        blocks = []
        for k, block in enumerate(y.blocks, start=1):
            T = block.reshape((self.d,) * k)
            for axis in range(k):
                T = np.take(T, index, axis=axis)
            blocks.append(T.ravel())
        return CarlemanVector(d=self.d, blocks=blocks)

    def apply_streaming(self, y: CarlemanVector) -> CarlemanVector:
        """S^(x)k on every block k."""
        self._check(y)
        return self._permute(y, self.src)

    def apply_streaming_adjoint(self, y: CarlemanVector) -> CarlemanVector:
        self._check(y)
        return self._permute(y, self.src_inverse)

    def apply(self, y: CarlemanVector) -> CarlemanVector:
        """One Carleman time step S C y, matrix-free."""
        return self.apply_streaming(self.apply_collision(y))

    def apply_adjoint(self, z: CarlemanVector) -> CarlemanVector:
        """(S C)^T z = C^T S^T z, matrix-free."""
        return self.apply_collision_adjoint(self.apply_streaming_adjoint(z))

    def assembled_bytes(self) -> int:
        return assembled_bytes(self.matrices, self.N, self.N_C)

    def assembled(self) -> "AssembledCarleman":
        if self._assembled is None:
            self._assembled = assemble_sparse(self)
        return self._assembled

    def uses_sparse(self) -> bool:
        return self.sparse_limit is not None and self.assembled_bytes() <= self.sparse_limit

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """S C x on a flat vector, via the assembled matrix when it is small enough."""
        if self.uses_sparse():
            return self.assembled().SC @ x
        y = CarlemanVector.from_flat(x, self.d, self.N_C)
        return self.apply(y).flat

    def rmatvec(self, x: np.ndarray) -> np.ndarray:
        """(S C)^T x on a flat vector."""
        if self.uses_sparse():
            return self.assembled().SC.T @ x
        z = CarlemanVector.from_flat(x, self.d, self.N_C)
        return self.apply_adjoint(z).flat


def apply_carleman_step(y: CarlemanVector, op: CarlemanOperator) -> CarlemanVector:
    """Return S C y for a Carleman vector matching the operator."""
    return op.apply(y)


class CarlemanRun(BaseModel):
    """First Carleman blocks and per-block norms over an evolution."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    first_block: np.ndarray
    block_norms: np.ndarray
    final: CarlemanVector
    states: Optional[List[CarlemanVector]] = None

    @property
    def T_star(self) -> int:
        return self.first_block.shape[0] - 1


def evolve_carleman(
    y0: CarlemanVector, T_star: int, op: CarlemanOperator, keep_states: bool = False
) -> CarlemanRun:
    """
    Apply S C repeatedly for T* steps.

    Args:
        y0: Initial Carleman vector
        T_star: Number of steps (0 returns y0 unchanged)
        op: Operator for the same d and N_C
        keep_states: Keep every intermediate Carleman vector

    Returns:
        CarlemanRun with y_1(t) for every t and the block norms per step
    """
    if T_star < 0:
        raise InvalidParameterError(f"T* must be >= 0, got {T_star}")
    op._check(y0)

    first = [y0.blocks[0].copy()]
    norms = [y0.block_norms]
    states = [y0] if keep_states else None
    y = y0
    for t in range(1, T_star + 1):
        y = op.apply(y)
        block_norms = y.block_norms
        if not np.all(np.isfinite(block_norms)):
            raise NumericalError(f"Carleman block norms overflowed at N_C={op.N_C}", step=t)
        first.append(y.blocks[0].copy())
        norms.append(block_norms)
        if keep_states:
            states.append(y)
        logger.debug(f"Carleman step {t}: block norms {np.array2string(block_norms, precision=3)}")

    return CarlemanRun(
        first_block=np.array(first), block_norms=np.array(norms), final=y, states=states
    )


class AssembledCarleman(BaseModel):
    """Sparse C, S and S C in CSR format."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    C: sp.spmatrix
    S: sp.spmatrix
    SC: sp.spmatrix


def _sitewise_linear(IF1: np.ndarray, N: int) -> sp.csr_matrix:
    return sp.kron(sp.identity(N, format="csr"), sp.csr_matrix(IF1), format="csr")


def _sitewise_quadratic(F2: np.ndarray, N: int) -> sp.csr_matrix:
    """I_{r,r} (x) F2~: rows (r, m), columns ((r, a), (r, b))."""
    Q = F2.shape[0]
    d = N * Q
    m, a, b = np.nonzero(F2)
    values = F2[m, a, b]
    r = np.arange(N)[:, None]
    rows = r * Q + m
    cols = (r * Q + a) * d + (r * Q + b)
    return sp.coo_matrix(
        (np.tile(values, N), (rows.ravel(), cols.ravel())), shape=(d, d * d)
    ).tocsr()


def assembled_bytes(matrices: CollisionMatrices, N: int, N_C: int) -> int:
    """Rough byte estimate of the assembled C (12 bytes per stored entry)."""
    nnz_lin = N * np.count_nonzero(matrices.IF1)
    nnz_quad = N * np.count_nonzero(matrices.F2_tilde)
    nnz = 0
    for k in range(1, N_C + 1):
        for l in range(k, min(2 * k, N_C) + 1):
            terms = len(placements(k, l))
            nnz += terms * nnz_lin ** (2 * k - l) * nnz_quad ** (l - k)
    return 12 * int(nnz)


def assemble_collision(matrices: CollisionMatrices, N: int, N_C: int) -> sp.csr_matrix:
    """Sparse Carleman collision matrix for N sites at truncation N_C."""
    linear = _sitewise_linear(matrices.IF1, N)
    quadratic = _sitewise_quadratic(matrices.F2_tensor, N)
    grid: List[List[Optional[sp.csr_matrix]]] = [[None] * N_C for _ in range(N_C)]
    for k in range(1, N_C + 1):
        for l in range(k, min(2 * k, N_C) + 1):
            block = None
            for f2_slots in placements(k, l):
                term = None
                for j in range(k):
                    factor = quadratic if j in f2_slots else linear
                    term = factor if term is None else sp.kron(term, factor, format="csr")
                block = term if block is None else block + term
            grid[k - 1][l - 1] = block
    return sp.bmat(grid, format="csr")


def assemble_sparse(op: CarlemanOperator, max_bytes: Optional[int] = None) -> AssembledCarleman:
    """
    Explicit sparse C, S and S C for cross-validation on small instances.

    Raises:
        CapacityError: when the estimated storage exceeds ``max_bytes`` (default: op.max_mem)
    """
    limit = op.max_mem if max_bytes is None else max_bytes
    check_capacity(op.assembled_bytes(), limit, "assembled Carleman matrices", N=op.N, N_C=op.N_C)

    C = assemble_collision(op.matrices, op.N, op.N_C)
    d = op.d
    P = sp.csr_matrix((np.ones(d), (np.arange(d), op.src)), shape=(d, d))
    stream_blocks = []
    S_k = P
    for k in range(1, op.N_C + 1):
        if k > 1:
            S_k = sp.kron(S_k, P, format="csr")
        stream_blocks.append(S_k)
    S = sp.block_diag(stream_blocks, format="csr")
    logger.debug(f"Assembled Carleman matrices: d_C={op.d_C}, nnz(C)={C.nnz}")
    return AssembledCarleman(C=C, S=S, SC=(S @ C).tocsr())


def block_pattern(C: sp.spmatrix, d: int, N_C: int) -> Dict[int, Sequence[int]]:
    """Non-zero block columns per block row of an assembled Carleman matrix."""
    bounds = np.cumsum([0] + [d ** k for k in range(1, N_C + 1)])
    C = C.tocsr()
    pattern = {}
    for k in range(N_C):
        rows = C[bounds[k]:bounds[k + 1]]
        pattern[k + 1] = [
            l + 1 for l in range(N_C) if rows[:, bounds[l]:bounds[l + 1]].nnz > 0
        ]
    return pattern
