"""Momentum-exchange drag on walls and the boundary states used to read it out."""

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from carleman_lbm.errors import InvalidParameterError
from carleman_lbm.lattice_model import FluidState, LatticeGeometry, VelocityModel, _check_layout
from carleman_lbm.simulation import SimParams

logger = logging.getLogger("carleman_lbm")


class DragResult(BaseModel):
    """Drag on the walls at one time step, in lattice units unless a conversion factor is set."""

    F0_star: List[float]
    F_star: List[float]
    components: List[float]
    links: int
    physical_factor: Optional[float] = None

    @property
    def units(self) -> str:
        return "lattice" if self.physical_factor is None else "physical"

    @property
    def F_physical(self) -> Optional[List[float]]:
        if self.physical_factor is None:
            return None
        return [self.physical_factor * f for f in self.F_star]


class BoundaryState(BaseModel):
    """Unnormalized amplitudes of the boundary state for force component k, flat over (site, m)."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    k: int
    amplitudes: np.ndarray
    normalization: float

    @property
    def empty(self) -> bool:
        return self.normalization == 0.0

    @property
    def support(self) -> int:
        return int(np.count_nonzero(self.amplitudes))

    def overlap(self, state: FluidState) -> float:
        """<W_k | g / ||g||>; zero for an empty boundary or a zero state."""
        norm = state.norm
        if self.empty or norm == 0.0:
            return 0.0
        return float(self.amplitudes @ state.g) / (np.sqrt(self.normalization) * norm)


def boundary_links(model: VelocityModel, geom: LatticeGeometry) -> Tuple[np.ndarray, np.ndarray]:
    """
    Fluid-to-wall links: fluid sites r with r + e_m a wall node.

    Returns:
        Tuple of (site indices, velocity indices), one entry per link
    """
    _check_layout(np.empty(geom.N * model.Q), model, geom)
    wall = geom.wall_mask
    coords = geom.coordinates
    sites = []
    velocities = []
    for m, e_m in enumerate(model.e):
        hit = wall[geom.site_index(coords + e_m)] & ~wall
        r = np.nonzero(hit)[0]
        sites.append(r)
        velocities.append(np.full(r.size, m, dtype=np.int64))
    return np.concatenate(sites), np.concatenate(velocities)


def physical_force_factor(sim: SimParams, reference_mass: float = 1.0) -> Optional[float]:
    """reference_mass * dx^2 / dt, or None without physical anchors."""
    if sim.delta_x is None or sim.delta_t is None:
        return None
    return reference_mass * sim.delta_x ** 2 / sim.delta_t


def drag_force(
    state: FluidState,
    model: VelocityModel,
    geom: LatticeGeometry,
    components: Optional[Sequence[int]] = None,
    sim: Optional[SimParams] = None,
    reference_mass: float = 1.0,
) -> DragResult:
    """
    Momentum-exchange drag F* = F0* + sum over links of (g_m + g_-m) e_m.

    Args:
        state: Shifted populations at the evaluation step
        model: Velocity model
        geom: Lattice with the wall indicator
        components: Axes k of the g-dependent sum to report; all axes by default
        sim: Parameters providing dx and dt for the physical conversion
        reference_mass: Mass of one unit cell

    Returns:
        DragResult with F0*, F* and the requested components F_k
    """
    _check_layout(state.g, model, geom)
    D = model.dimension
    components = list(range(D)) if components is None else list(components)
    if any(not 0 <= k < D for k in components):
        raise InvalidParameterError(f"force components {components} out of range for D={D}")

    sites, m = boundary_links(model, geom)
    e = model.e[m].astype(np.float64)
    G = state.sites(model.Q)
    pair = G[sites, m] + G[sites, model.opposite[m]]

    F0 = (2.0 * model.w[m])[:, None] * e
    F0 = F0.sum(axis=0) if sites.size else np.zeros(D)
    F_g = (pair[:, None] * e).sum(axis=0) if sites.size else np.zeros(D)

    factor = physical_force_factor(sim, reference_mass) if sim is not None else None
    result = DragResult(
        F0_star=F0.tolist(),
        F_star=(F0 + F_g).tolist(),
        components=[float(F_g[k]) for k in components],
        links=int(sites.size),
        physical_factor=factor,
    )
    logger.debug(f"drag over {result.links} links: F*={result.F_star}")
    return result


def boundary_state(model: VelocityModel, geom: LatticeGeometry, k: int) -> BoundaryState:
    """
    Amplitudes (e_m)_k on |r>(|m> + |-m>) for every fluid-to-wall link, summed per entry.

    The normalization is the squared norm of the amplitude vector. A lattice
    without links along axis k gives an empty state with normalization 0.
    """
    if not 0 <= k < model.dimension:
        raise InvalidParameterError(f"axis {k} out of range for D={model.dimension}")
    sites, m = boundary_links(model, geom)
    a = model.e[m, k].astype(np.float64)
    b = np.zeros(geom.N * model.Q)
    np.add.at(b, sites * model.Q + m, a)
    np.add.at(b, sites * model.Q + model.opposite[m], a)
    normalization = float(b @ b)
    if normalization == 0.0:
        logger.warning(f"boundary state for axis {k} has empty support")
    return BoundaryState(k=k, amplitudes=b, normalization=normalization)


def overlap_check(state: FluidState, model: VelocityModel, geom: LatticeGeometry, k: int) -> float:
    """|<W_k|g/||g||> ||g|| sqrt(N_W) - F_k|, which vanishes up to round-off."""
    boundary = boundary_state(model, geom, k)
    force = drag_force(state, model, geom, components=[k]).components[0]
    estimate = boundary.overlap(state) * state.norm * np.sqrt(boundary.normalization)
    return abs(estimate - force)
