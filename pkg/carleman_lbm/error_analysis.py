"""Carleman truncation error metrics, exponential error model, threshold detection and power-law fits."""

import logging
import math
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel

from carleman_lbm.carleman import (
    DEFAULT_MAX_MEM,
    CarlemanOperator,
    carleman_initial,
    evolve_carleman,
)
from carleman_lbm.errors import InsufficientDataError, InvalidParameterError
from carleman_lbm.lattice_model import LatticeGeometry, velocity_model
from carleman_lbm.simulation import InitialStateSpec, SimParams, Trajectory, initial_state, run_lbe
from carleman_lbm.stats import FitResult, fit_exponential, fit_power

logger = logging.getLogger("carleman_lbm")

States = Union[Trajectory, np.ndarray]


class ErrorRecord(BaseModel):
    """Truncation error of one (Re, N_C) run with its per-step series."""

    Re: float
    beta: float
    D: int
    N_C: int
    epsilon_C: float
    epsilon_rmse: float
    series_C: List[float]
    series_rmse: List[float]


class ThresholdResult(BaseModel):
    """Estimated Re where eps_C(N_C=2) first exceeds eps_C(N_C=1)."""

    found: bool
    Re_T: Optional[float] = None
    bracket: Optional[Tuple[float, float]] = None
    message: str = ""


def _as_array(states: States) -> np.ndarray:
    return states.g if isinstance(states, Trajectory) else np.asarray(states)


def _paired(exact: States, approx: States) -> Tuple[np.ndarray, np.ndarray]:
    a = _as_array(exact)
    b = _as_array(approx)
    if a.shape != b.shape:
        raise InvalidParameterError(f"trajectory shapes differ: {a.shape} vs {b.shape}")
    return a, b


def velocity_error_series(exact: States, approx: States, sim: SimParams) -> np.ndarray:
    """(1/(N u_ini)) sum_r ||u_exact(r, t) - u_approx(r, t)|| for every t."""
    a, b = _paired(exact, approx)
    model = velocity_model(sim.D)
    steps = a.shape[0]
    diff = (a - b).reshape(steps, -1, model.Q)
    du = diff @ model.e
    per_site = np.linalg.norm(du, axis=2)
    return per_site.sum(axis=1) / (per_site.shape[1] * sim.u_ini_star)


def epsilon_C(exact: States, approx: States, sim: SimParams) -> float:
    """
    Relative physical velocity error, maximized over t* = 1..T*.

    Args:
        exact: Direct LBE trajectory, shape (T*+1, N*Q)
        approx: First Carleman blocks over the same steps
        sim: Parameters providing u_ini_star

    Returns:
        eps_C >= 0 (0 when T* = 0)
    """
    series = velocity_error_series(exact, approx, sim)
    if series.size <= 1:
        return 0.0
    return float(series[1:].max())


def rmse_series(exact: States, approx: States, D: int) -> np.ndarray:
    """
    Per-step population RMSE (1/Q) sum_m sqrt(mean_r (1 - f~_m / f_m)^2) with f = g + w.

    Entries with f = 0 are excluded from the site mean; the excluded count is logged.
    """
    a, b = _paired(exact, approx)
    model = velocity_model(D)
    steps = a.shape[0]
    f_exact = a.reshape(steps, -1, model.Q) + model.w
    f_approx = b.reshape(steps, -1, model.Q) + model.w

    valid = f_exact != 0
    excluded = int(np.size(valid) - np.count_nonzero(valid))
    if excluded:
        logger.warning(f"RMSE excludes {excluded} zero-population entries")
    ratio = np.divide(f_approx, f_exact, out=np.ones_like(f_approx), where=valid)
    sq = np.where(valid, (1.0 - ratio) ** 2, 0.0)
    counts = valid.sum(axis=1)
    mean_sq = np.divide(sq.sum(axis=1), counts, out=np.zeros(counts.shape), where=counts > 0)
    return np.sqrt(mean_sq).mean(axis=1)


def epsilon_rmse(exact: States, approx: States, D: int) -> float:
    """Maximum over t* of the population RMSE."""
    return float(rmse_series(exact, approx, D).max())


def measure_truncation_error(
    sim: SimParams,
    N_C: int,
    initial: Optional[InitialStateSpec] = None,
    geom: Optional[LatticeGeometry] = None,
    max_mem: Optional[int] = DEFAULT_MAX_MEM,
    workers: int = 1,
) -> ErrorRecord:
    """Run the direct LBE and the truncated Carleman evolution side by side and compare them."""
    initial = initial or InitialStateSpec()
    geom = geom or sim.geometry()
    model = velocity_model(sim.D)

    g0 = initial_state(initial.kind, sim, phi=initial.phi, s=initial.s, sigma=initial.sigma)
    exact = run_lbe(g0, sim, geom)
    op = CarlemanOperator(model, geom, sim.tau_bar_star, N_C, workers=workers, max_mem=max_mem)
    run = evolve_carleman(carleman_initial(g0, N_C, max_mem=max_mem), sim.T_star, op)

    series_C = velocity_error_series(exact, run.first_block, sim)
    series_rmse = rmse_series(exact, run.first_block, sim.D)
    record = ErrorRecord(
        Re=sim.Re, beta=sim.beta, D=sim.D, N_C=N_C,
        epsilon_C=float(series_C[1:].max()) if series_C.size > 1 else 0.0,
        epsilon_rmse=float(series_rmse.max()),
        series_C=series_C.tolist(),
        series_rmse=series_rmse.tolist(),
    )
    logger.info(f"Re={sim.Re} N_C={N_C}: eps_C={record.epsilon_C:.4e} eps_rmse={record.epsilon_rmse:.4e}")
    return record


def fit_error_model(points: Iterable[Tuple[int, float]]) -> FitResult:
    """eps_C = E exp(Gamma N_C) by OLS on ln eps_C; Gamma < 0 means convergence in N_C."""
    points = list(points)
    return fit_exponential([p[0] for p in points], [p[1] for p in points])


def fit_power_law(points: Iterable[Tuple[float, float]]) -> FitResult:
    """kappa = c Re^chi by OLS on ln kappa against ln Re."""
    points = list(points)
    return fit_power([p[0] for p in points], [p[1] for p in points])


def required_truncation_order(fit: FitResult, epsilon: float) -> int:
    """Smallest N_C with E exp(Gamma N_C) <= epsilon, i.e. ceil(ln(E/eps) / |Gamma|)."""
    if fit.model != "exponential":
        raise InvalidParameterError("truncation order needs an exponential error fit")
    if not fit.convergent:
        raise InvalidParameterError(
            f"error model diverges (Gamma={fit.Gamma:.4f}); no truncation order reaches {epsilon}"
        )
    if epsilon <= 0:
        raise InvalidParameterError(f"target error must be positive, got {epsilon}")
    return max(1, math.ceil(math.log(fit.E / epsilon) / abs(fit.Gamma)))


def detect_threshold(table: Union[pd.DataFrame, Sequence[Tuple[float, int, float]]]) -> ThresholdResult:
    """
    First Reynolds number where eps_C(N_C=2) > eps_C(N_C=1).

    The crossing is located by linear interpolation of eps_C(2) - eps_C(1)
    between the bracketing sweep points.

    Args:
        table: DataFrame with columns Re, N_C, epsilon_C, or (Re, N_C, eps) tuples

    Returns:
        ThresholdResult; ``found`` is False when the ordering never flips
    """
    if isinstance(table, pd.DataFrame):
        df = table[["Re", "N_C", "epsilon_C"]]
    else:
        df = pd.DataFrame(list(table), columns=["Re", "N_C", "epsilon_C"])
    df = df[df["N_C"].isin([1, 2])]
    wide = df.pivot_table(index="Re", columns="N_C", values="epsilon_C", aggfunc="first")
    if 1 not in wide.columns or 2 not in wide.columns:
        raise InsufficientDataError("threshold detection needs eps_C at both N_C=1 and N_C=2")
    wide = wide.dropna().sort_index()
    if len(wide) < 2:
        raise InsufficientDataError(f"threshold detection needs at least 2 Re values, got {len(wide)}")

    re = wide.index.to_numpy(dtype=np.float64)
    diff = (wide[2] - wide[1]).to_numpy(dtype=np.float64)
    flipped = np.nonzero(diff > 0)[0]
    if flipped.size == 0:
        return ThresholdResult(found=False, message=f"not found in range [{re[0]:g}, {re[-1]:g}]")

    i = int(flipped[0])
    if i == 0:
        return ThresholdResult(
            found=True, Re_T=float(re[0]), bracket=(float(re[0]), float(re[0])),
            message="ordering already flipped at the lowest Re of the sweep",
        )
    lo, hi = re[i - 1], re[i]
    Re_T = lo + (0.0 - diff[i - 1]) * (hi - lo) / (diff[i] - diff[i - 1])
    return ThresholdResult(found=True, Re_T=float(Re_T), bracket=(float(lo), float(hi)))
