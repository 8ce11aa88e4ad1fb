"""Reynolds-number parameter selection, initial states and the direct shifted-LBE stepper."""

import logging
import math
from typing import Iterator, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from carleman_lbm.errors import InvalidParameterError, NumericalError
from carleman_lbm.lattice_model import (
    FluidState,
    LatticeGeometry,
    check_relaxation,
    collide_sites,
    equilibrium,
    streaming_source,
    velocity_model,
)

logger = logging.getLogger("carleman_lbm")


def integer_ceil(x: float, rel_tol: float = 1e-9) -> int:
    """Ceiling that treats values within ``rel_tol`` of an integer as that integer."""
    nearest = round(x)
    if abs(x - nearest) <= rel_tol * max(1.0, abs(x)):
        return int(nearest)
    return int(math.ceil(x))


class SimParams(BaseModel):
    """Lattice-unit simulation parameters derived from (Re, beta, D)."""

    model_config = ConfigDict(frozen=True)

    Re: float = Field(ge=1)
    beta: float = Field(gt=0)
    D: int
    eta_u: float = 1.0
    eta_L: float = 1.0
    eta_T: float = 1.0
    u0_star: float = 1.0
    N_x: int = Field(ge=1)
    T_star: int = Field(ge=0)
    tau_bar_star: float = Field(gt=0.5)
    u_ini_star: float
    length: Optional[float] = None
    nu: Optional[float] = None

    @field_validator("D")
    @classmethod
    def _check_dimension(cls, D: int) -> int:
        if D not in (1, 2, 3):
            raise ValueError(f"D must be 1, 2 or 3, got {D}")
        return D

    @property
    def N(self) -> int:
        return self.N_x ** self.D

    @property
    def Q(self) -> int:
        return 3 ** self.D

    @property
    def d(self) -> int:
        """Length of the state vector g."""
        return self.N * self.Q

    @property
    def u_star_max(self) -> float:
        """Closed-form maximal lattice velocity Re^(-beta D / 2)."""
        return self.Re ** (-self.beta * self.D / 2)

    @property
    def delta_x(self) -> Optional[float]:
        if self.length is None:
            return None
        return self.length / self.N_x

    @property
    def delta_t(self) -> Optional[float]:
        """Chapman-Enskog time step dx^2 (tau - 1/2) / (3 nu)."""
        if self.length is None or self.nu is None:
            return None
        return self.delta_x ** 2 * (self.tau_bar_star - 0.5) / (3.0 * self.nu)

    def geometry(self, walls: Optional[np.ndarray] = None) -> LatticeGeometry:
        return LatticeGeometry(shape=(self.N_x,) * self.D, walls=walls)


def select_params(
    Re: float,
    beta: float,
    D: int,
    eta_u: float = 1.0,
    eta_L: float = 1.0,
    eta_T: float = 1.0,
    u0_star: float = 1.0,
    length: Optional[float] = None,
    nu: Optional[float] = None,
) -> SimParams:
    """
    Choose N_x, T*, tau and the initial velocity scale from the Reynolds number.

    Args:
        Re: Reynolds number (>= 1)
        beta: Resolution exponent (3/4 resolves the Kolmogorov scale)
        D: Spatial dimension
        eta_u, eta_L, eta_T: Scale factors of the generalized parameter choice
        u0_star: Velocity normalization constant
        length, nu: Optional physical anchors for dx and dt

    Returns:
        SimParams with N_x = ceil(Re^beta / eta_L), T* = ceil(Re^(beta(D/2+1)) / (...)),
        tau = 1/2 + 3 u0 eta_L^(D/2) eta_u / Re^(beta(D/2-1)+1) and u_ini = u0 N_x^(-D/2)
    """
    if Re < 1:
        raise InvalidParameterError(f"Reynolds number must be >= 1, got {Re}")
    if beta <= 0:
        raise InvalidParameterError(f"beta must be positive, got {beta}")
    if D not in (1, 2, 3):
        raise InvalidParameterError(f"Unsupported dimension D={D}")

    half_D = D / 2
    N_x = integer_ceil(Re ** beta / eta_L)
    T_star = integer_ceil(
        Re ** (beta * (half_D + 1)) / (eta_T * eta_u * eta_L ** half_D * u0_star)
    )
    tau = 0.5 + 3.0 * u0_star * eta_L ** half_D * eta_u / Re ** (beta * (half_D - 1) + 1)
    if tau <= 0.5:
        raise InvalidParameterError(f"parameters give unstable relaxation time {tau}")
    u_ini = u0_star * N_x ** (-half_D)

    logger.debug(f"select_params Re={Re} beta={beta} D={D}: N_x={N_x} T*={T_star} tau={tau:.6f}")
    return SimParams(
        Re=Re, beta=beta, D=D, eta_u=eta_u, eta_L=eta_L, eta_T=eta_T, u0_star=u0_star,
        N_x=N_x, T_star=T_star, tau_bar_star=tau, u_ini_star=u_ini, length=length, nu=nu,
    )


class InitialStateSpec(BaseModel):
    """Initial velocity field family and its parameters."""

    kind: Literal["sinusoidal", "colliding", "taylor_green", "gaussian_dipole"] = "sinusoidal"
    phi: float = 0.25
    s: float = math.pi / 2
    sigma: float = math.pi / 5


def _sample_coordinates(N_x: int, D: int) -> np.ndarray:
    """Physical coordinates -pi + 2 pi r*/N_x for lattice coordinates r* = 1..N_x, shape (N, D)."""
    geom = LatticeGeometry.periodic(N_x, D)
    r_star = geom.coordinates + 1
    return -np.pi + 2.0 * np.pi * r_star / N_x


def velocity_field(spec: InitialStateSpec, sim: SimParams) -> np.ndarray:
    """Unscaled velocity field of the requested family, shape (N, D)."""
    kind = spec.kind
    if kind in ("sinusoidal", "colliding") and sim.D != 1:
        raise InvalidParameterError(f"{kind} initial states are one-dimensional, got D={sim.D}")
    if kind in ("taylor_green", "gaussian_dipole") and sim.D != 2:
        raise InvalidParameterError(f"{kind} initial states are two-dimensional, got D={sim.D}")

    N_x = sim.N_x
    if kind == "sinusoidal":
        r_star = np.arange(1, N_x + 1)
        return np.sin(2.0 * np.pi * r_star / N_x)[:, None]

    if kind == "colliding":
        if not 0 < spec.phi <= 0.5:
            raise InvalidParameterError(f"fraction phi must lie in (0, 1/2], got {spec.phi}")
        c = integer_ceil(spec.phi * N_x)
        r_star = np.arange(1, N_x + 1)
        u = np.zeros(N_x)
        u[r_star <= c] = 1.0
        u[r_star >= N_x - c + 1] = -1.0
        return u[:, None]

    xy = _sample_coordinates(N_x, 2)
    x, y = xy[:, 0], xy[:, 1]
    if kind == "taylor_green":
        return np.stack([np.sin(x) * np.cos(y), -np.cos(x) * np.sin(y)], axis=1)

    # Gaussian dipole: u = (d psi/dy, -d psi/dx)
    two_sigma_sq = 2.0 * spec.sigma ** 2
    right = np.exp(-((x - spec.s) ** 2 + y ** 2) / two_sigma_sq)
    left = np.exp(-((x + spec.s) ** 2 + y ** 2) / two_sigma_sq)
    dpsi_dx = (-(x - spec.s) * right + (x + spec.s) * left) / spec.sigma ** 2
    dpsi_dy = (-y * right + y * left) / spec.sigma ** 2
    return np.stack([dpsi_dy, -dpsi_dx], axis=1)


def initial_state(kind: str, sim: SimParams, **params) -> FluidState:
    """
    Equilibrium state g(0) = g^eq(drho=0, u_ini * u_X) for one of the initial-state families.

    Args:
        kind: sinusoidal, colliding, taylor_green or gaussian_dipole
        sim: Simulation parameters (N_x, u_ini_star)
        **params: phi for colliding; s and sigma for gaussian_dipole

    Returns:
        FluidState at t* = 0
    """
    spec = InitialStateSpec(kind=kind, **params)
    model = velocity_model(sim.D)
    u = sim.u_ini_star * velocity_field(spec, sim)
    g = equilibrium(np.zeros(sim.N), u, model)
    return FluidState(g=g, t_star=0)


class Trajectory(BaseModel):
    """States g(0..T*) stacked row-wise, with their 2-norms."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    g: np.ndarray
    norms: np.ndarray

    @property
    def T_star(self) -> int:
        return self.g.shape[0] - 1

    def __len__(self) -> int:
        return self.g.shape[0]

    def state(self, t_star: int) -> FluidState:
        return FluidState(g=self.g[t_star], t_star=t_star)


def iterate_lbe(
    g0: FluidState, sim: SimParams, geom: LatticeGeometry, steps: Optional[int] = None
) -> Iterator[np.ndarray]:
    """Yield g(0), g(1), ... as flat arrays, applying stream(collide(.)) each step."""
    check_relaxation(sim.tau_bar_star)
    model = velocity_model(sim.D)
    src = streaming_source(model, geom)
    if g0.g.size != src.size:
        raise InvalidParameterError(
            f"initial state has length {g0.g.size}, lattice needs {src.size}"
        )
    steps = sim.T_star if steps is None else steps

    g = g0.g.copy()
    yield g
    for t in range(1, steps + 1):
        g = collide_sites(g.reshape(-1, model.Q), model, sim.tau_bar_star).ravel()[src]
        if not np.all(np.isfinite(g)):
            raise NumericalError("Non-finite populations in the LBE stepper", step=t)
        yield g


def run_lbe(g0: FluidState, sim: SimParams, geom: LatticeGeometry) -> Trajectory:
    """
    Direct shifted-LBE evolution for T* steps; the truth oracle for Carleman runs.

    Logs a warning the first time ||g(t*)|| exceeds 1.
    """
    states = []
    norms = []
    warned = False
    for t, g in enumerate(iterate_lbe(g0, sim, geom)):
        norm = float(np.linalg.norm(g))
        if norm > 1.0 and not warned:
            logger.warning(f"||g(t*)|| = {norm:.4f} exceeds 1 at t*={t} (Re={sim.Re}, D={sim.D})")
            warned = True
        states.append(g)
        norms.append(norm)
    logger.debug(f"LBE run finished: T*={sim.T_star}, max norm {max(norms):.4f}")
    return Trajectory(g=np.array(states), norms=np.array(norms))
