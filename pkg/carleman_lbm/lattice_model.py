"""Discrete velocity models, shifted incompressible BGK collision and bounce-back streaming."""

import itertools
import logging
import math
from fractions import Fraction
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationInfo, field_validator

from carleman_lbm.errors import InvalidParameterError

logger = logging.getLogger("carleman_lbm")

# One-dimensional D1Q3 weights; DdQ3^d weights are products over components.
_COMPONENT_WEIGHTS = {0: Fraction(2, 3), 1: Fraction(1, 6), -1: Fraction(1, 6)}


class VelocityModel(BaseModel):
    """
    A DdQq velocity set in lattice units.

    Velocity ordering is fixed: the rest velocity, then the axis velocities
    (+x, -x, +y, -y, +z, -z), then the remaining vectors grouped by their number
    of non-zero components, each group in ``itertools.product((0, 1, -1))`` order.
    For D2Q9 the diagonals are therefore (1,1), (1,-1), (-1,1), (-1,-1).
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    dimension: int
    velocities: Tuple[Tuple[int, ...], ...]
    weights: Tuple[Fraction, ...]

    @property
    def Q(self) -> int:
        return len(self.velocities)

    @property
    def name(self) -> str:
        return f"D{self.dimension}Q{self.Q}"

    @property
    def e(self) -> np.ndarray:
        """Velocities as an integer (Q, D) array."""
        return np.array(self.velocities, dtype=np.int64).reshape(self.Q, self.dimension)

    @property
    def w(self) -> np.ndarray:
        return np.array([float(x) for x in self.weights])

    @property
    def gram(self) -> np.ndarray:
        """Integer Gram matrix E[m, n] = e_m . e_n."""
        e = self.e
        return e @ e.T

    @property
    def opposite(self) -> np.ndarray:
        """Index of -e_m for every m."""
        index = {v: i for i, v in enumerate(self.velocities)}
        return np.array([index[tuple(-c for c in v)] for v in self.velocities], dtype=np.int64)


def velocity_model(D: int) -> VelocityModel:
    """
    Build the D1Q3, D2Q9 or D3Q27 model.

    Args:
        D: Spatial dimension (1, 2 or 3)

    Returns:
        VelocityModel with exact rational weights summing to 1
    """
    if D not in (1, 2, 3):
        raise InvalidParameterError(f"Unsupported dimension D={D}; expected 1, 2 or 3")

    rest = (0,) * D
    axes = []
    for axis in range(D):
        for sign in (1, -1):
            v = [0] * D
            v[axis] = sign
            axes.append(tuple(v))
    others = [
        v for v in itertools.product((0, 1, -1), repeat=D)
        if sum(c != 0 for c in v) >= 2
    ]
    others.sort(key=lambda v: sum(c != 0 for c in v))

    velocities = (rest, *axes, *others)
    weights = tuple(
        math.prod((_COMPONENT_WEIGHTS[c] for c in v), start=Fraction(1))
        for v in velocities
    )
    model = VelocityModel(dimension=D, velocities=velocities, weights=weights)
    assert sum(model.weights) == 1
    return model


class LatticeGeometry(BaseModel):
    """Periodic box of ``shape`` sites with an optional boolean wall indicator per site."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    shape: Tuple[int, ...]
    walls: Optional[np.ndarray] = None

    @field_validator("shape")
    @classmethod
    def _check_shape(cls, shape: Tuple[int, ...]) -> Tuple[int, ...]:
        if not 1 <= len(shape) <= 3 or any(n < 1 for n in shape):
            raise ValueError(f"shape must hold 1 to 3 positive sizes, got {shape}")
        return tuple(int(n) for n in shape)

    @field_validator("walls", mode="before")
    @classmethod
    def _check_walls(cls, walls: Optional[np.ndarray], info: ValidationInfo) -> Optional[np.ndarray]:
        if walls is None:
            return None
        walls = np.asarray(walls, dtype=bool)
        shape = info.data.get("shape")
        if shape is not None and walls.shape != tuple(shape):
            raise ValueError(f"wall mask shape {walls.shape} does not match lattice {shape}")
        walls = walls.copy()
        walls.setflags(write=False)
        return walls

    @classmethod
    def periodic(cls, N_x: int, D: int) -> "LatticeGeometry":
        return cls(shape=(N_x,) * D)

    @property
    def dimension(self) -> int:
        return len(self.shape)

    @property
    def N(self) -> int:
        return int(np.prod(self.shape))

    @property
    def has_walls(self) -> bool:
        return self.walls is not None and bool(self.walls.any())

    @property
    def wall_mask(self) -> np.ndarray:
        """Flat wall indicator in row-major site order."""
        if self.walls is None:
            return np.zeros(self.N, dtype=bool)
        return self.walls.ravel()

    @property
    def coordinates(self) -> np.ndarray:
        """0-based integer coordinates of every site, shape (N, D)."""
        return np.stack(np.unravel_index(np.arange(self.N), self.shape), axis=1)

    def site_index(self, coords: np.ndarray) -> np.ndarray:
        """Row-major site index of (periodically wrapped) coordinates, shape (..., D)."""
        coords = np.asarray(coords) % np.array(self.shape)
        return np.ravel_multi_index(tuple(np.moveaxis(coords, -1, 0)), self.shape)


class FluidState(BaseModel):
    """Shifted populations g (length N*Q, index site*Q + m) at time step t_star."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    g: np.ndarray
    t_star: int = Field(default=0, ge=0)

    @field_validator("g", mode="before")
    @classmethod
    def _check_g(cls, g: np.ndarray) -> np.ndarray:
        g = np.asarray(g, dtype=np.float64)
        if g.ndim != 1:
            g = g.ravel()
        if not np.all(np.isfinite(g)):
            raise ValueError("fluid state contains NaN or Inf entries")
        return g

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.g))

    def sites(self, Q: int) -> np.ndarray:
        """View of g as an (N, Q) array."""
        return self.g.reshape(-1, Q)


def _check_layout(g: np.ndarray, model: VelocityModel, geom: Optional[LatticeGeometry] = None) -> None:
    if g.size % model.Q:
        raise InvalidParameterError(f"state length {g.size} is not a multiple of Q={model.Q}")
    if geom is not None:
        if geom.dimension != model.dimension:
            raise InvalidParameterError(
                f"{model.name} cannot run on a {geom.dimension}-dimensional lattice"
            )
        if g.size != geom.N * model.Q:
            raise InvalidParameterError(
                f"state length {g.size} does not match N*Q = {geom.N * model.Q}"
            )


def check_relaxation(tau_bar_star: float, allow_marginal: bool = False) -> None:
    """Reject relaxation times in the unstable region (tau <= 1/2, or tau < 1/2 when marginal is allowed)."""
    if allow_marginal:
        if tau_bar_star < 0.5:
            raise InvalidParameterError(f"relaxation time {tau_bar_star} is below 1/2")
    elif tau_bar_star <= 0.5:
        raise InvalidParameterError(
            f"relaxation time {tau_bar_star} is in the unstable region tau <= 1/2"
        )


def equilibrium(delta_rho: np.ndarray, u_star: np.ndarray, model: VelocityModel) -> np.ndarray:
    """
    Shifted incompressible equilibrium.

    g^eq_m = w_m (drho + 3 e_m.u + 9/2 (e_m.u)^2 - 3/2 |u|^2) at every site.

    Args:
        delta_rho: Density deviation per site, shape (N,)
        u_star: Lattice velocity per site, shape (N, D) (shape (N,) accepted for D=1)
        model: Velocity model

    Returns:
        Flat array of length N*Q
    """
    delta_rho = np.asarray(delta_rho, dtype=np.float64).ravel()
    u = np.asarray(u_star, dtype=np.float64)
    if u.ndim == 1 and model.dimension == 1:
        u = u[:, None]
    if u.shape != (delta_rho.size, model.dimension):
        raise InvalidParameterError(
            f"velocity field shape {u.shape} does not match {delta_rho.size} sites in D={model.dimension}"
        )
    eu = u @ model.e.T
    usq = np.sum(u * u, axis=1, keepdims=True)
    geq = model.w * (delta_rho[:, None] + 3.0 * eu + 4.5 * eu ** 2 - 1.5 * usq)
    return geq.ravel()


def moments(state: FluidState, model: VelocityModel) -> Tuple[np.ndarray, np.ndarray]:
    """Return (delta_rho, u_star) per site: sums of g_m and g_m e_m."""
    _check_layout(state.g, model)
    G = state.sites(model.Q)
    return G.sum(axis=1), G @ model.e


def linear_collision_matrix(model: VelocityModel, tau_bar_star: float) -> np.ndarray:
    """Single-site F1: (w_m + 3 w_m E_mn - delta_mn) / tau."""
    w = model.w[:, None]
    return (w + 3.0 * w * model.gram - np.eye(model.Q)) / tau_bar_star


def quadratic_collision_tensor(model: VelocityModel, tau_bar_star: float) -> np.ndarray:
    """Single-site F2 as a (Q, Q, Q) tensor: (w_m / tau)(9/2 E_ma E_mb - 3/2 E_ab)."""
    E = model.gram.astype(np.float64)
    w = model.w
    quad = 4.5 * E[:, :, None] * E[:, None, :] - 1.5 * E[None, :, :]
    return w[:, None, None] * quad / tau_bar_star


def collide_sites(G: np.ndarray, model: VelocityModel, tau_bar_star: float) -> np.ndarray:
    """Moment-based BGK relaxation of an (N, Q) array."""
    delta_rho = G.sum(axis=1)
    u = G @ model.e
    geq = equilibrium(delta_rho, u, model).reshape(G.shape)
    return G - (G - geq) / tau_bar_star


def collide(
    state: FluidState, model: VelocityModel, tau_bar_star: float, method: str = "moments"
) -> FluidState:
    """
    One BGK collision g -> g - (g - g^eq(g)) / tau at every site.

    Args:
        state: Populations to relax
        model: Velocity model
        tau_bar_star: Relaxation time, must exceed 1/2
        method: "moments" (via g^eq of the moments) or "quadratic" ((I+F1)g + F2 g(x)g)

    Returns:
        Collided state at the same time index
    """
    check_relaxation(tau_bar_star)
    _check_layout(state.g, model)
    G = state.sites(model.Q)
    if method == "moments":
        out = collide_sites(G, model, tau_bar_star)
    elif method == "quadratic":
        IF1 = np.eye(model.Q) + linear_collision_matrix(model, tau_bar_star)
        F2 = quadratic_collision_tensor(model, tau_bar_star)
        out = G @ IF1.T + np.einsum("mab,na,nb->nm", F2, G, G)
    else:
        raise InvalidParameterError(f"Unknown collision method '{method}'")
    return FluidState(g=out.ravel(), t_star=state.t_star)


def streaming_source(model: VelocityModel, geom: LatticeGeometry) -> np.ndarray:
    """
    Gather map of one streaming step: ``g_new = g[src]``.

    Fluid population (r, m) is pulled from (r - e_m, m), or from (r, -m) when
    r - e_m is a wall node (bounce-back). Wall nodes keep their populations.
    The result is a permutation of range(N*Q).
    """
    _check_layout(np.empty(geom.N * model.Q), model, geom)
    Q = model.Q
    coords = geom.coordinates
    wall = geom.wall_mask
    opposite = model.opposite
    sites = np.arange(geom.N)

    src = np.empty((geom.N, Q), dtype=np.int64)
    for m, e_m in enumerate(model.e):
        upstream = geom.site_index(coords - e_m)
        src[:, m] = np.where(wall[upstream], sites * Q + opposite[m], upstream * Q + m)
    src[wall] = sites[wall, None] * Q + np.arange(Q)
    return src.ravel()


def stream(state: FluidState, model: VelocityModel, geom: LatticeGeometry) -> FluidState:
    """Move every population one lattice vector, with periodic wrap and bounce-back at walls."""
    _check_layout(state.g, model, geom)
    src = streaming_source(model, geom)
    return FluidState(g=state.g[src], t_star=state.t_star + 1)
