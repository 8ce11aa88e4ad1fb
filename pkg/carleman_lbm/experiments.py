"""
Sweep planning and point runners for every experiment.

A sweep is a list of independent points. Each finished point is written
atomically to ``<out>/points/<key>.json`` together with the hash of the
configuration that produced it, so an interrupted sweep resumes by skipping
points whose file matches the current configuration.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from carleman_lbm.carleman import CarlemanOperator, carleman_initial, evolve_carleman
from carleman_lbm.config import ExperimentConfig
from carleman_lbm.cost_model import (
    alpha_C,
    alpha_F2bar,
    alpha_IF1,
    be_ratio_approx,
    be_ratio_bound,
    build_cost_report,
    fit_be_ratio,
    lookup_condition_fit,
)
from carleman_lbm.error_analysis import detect_threshold, fit_error_model, fit_power_law, measure_truncation_error
from carleman_lbm.errors import CapacityError, ConfigError, InsufficientDataError
from carleman_lbm.export import (
    Manifest,
    config_hash,
    params_row,
    read_json,
    write_csv,
    write_json,
    write_manifest,
)
from carleman_lbm.gate_budget import gate_budget
from carleman_lbm.lattice_model import FluidState, velocity_model
from carleman_lbm.linear_system import TimeBlockSystem, condition_number, norm_C
from carleman_lbm.observables import boundary_state, drag_force, overlap_check
from carleman_lbm.simulation import initial_state, run_lbe, select_params

logger = logging.getLogger("carleman_lbm")

Rows = List[Dict[str, Any]]

COLUMNS: Dict[str, List[str]] = {
    "params-table": ["N_C", "Re", "N_x", "T_star", "tau_bar_star", "u_star", "dim_C", "dim_A_H"],
    "carleman-error": ["Re", "beta", "D", "N_C", "epsilon_C", "epsilon_rmse"],
    "threshold-scan": ["Re", "beta", "D", "N_C", "epsilon_C", "epsilon_rmse"],
    "condition-scaling": [
        "Re", "N_C", "kind", "W", "T_star", "dimension", "norm_C",
        "kappa", "kappa_lower", "iterations", "converged",
    ],
    "be-ratio": ["tau_bar_star", "N_C", "alpha_IF1", "alpha_F2bar", "alpha_C", "norm_C", "be_ratio", "be_approx"],
    "cost-report": [
        "Re", "N_C", "tau_bar_star", "norm_C", "alpha_A", "kappa", "be_ratio", "n_D", "n_A",
        "q_Q", "q_Q_simplified", "q_lower", "q_M", "q_c", "lambda", "lambda_meas",
    ],
    "gate-budget": [
        "Re", "D", "N_C", "epsilon", "W", "total", "simplified", "relative_gap", "epsilon_total", "bulk_share",
    ],
    "drag-demo": [
        "Re", "N_C", "T_star", "k", "links", "F0", "F_exact", "F_carleman", "overlap",
        "normalization", "identity_residual",
    ],
}


class ExperimentPoint(BaseModel):
    index: int
    key: str
    Re: Optional[float] = None
    N_C: Optional[int] = None
    tau_bar_star: Optional[float] = None


class PointResult(BaseModel):
    key: str
    config_hash: str
    rows: Rows
    detail: Dict[str, Any] = Field(default_factory=dict)


class ExperimentOutcome(BaseModel):
    experiment: str
    out_dir: str
    rows: Rows
    summary: Dict[str, Any]
    files: Dict[str, str]
    resumed: int


def plan_points(config: ExperimentConfig) -> List[ExperimentPoint]:
    """Sweep points in a fixed order: (tau, N_C) for BE ratios, Re for the drag demo, (Re, N_C) otherwise."""
    points: List[ExperimentPoint] = []
    if config.experiment == "be-ratio":
        for tau in config.tau_bar_star:
            for N_C in config.N_C:
                points.append(ExperimentPoint(
                    index=len(points), key=f"tau={tau:g}_NC={N_C}", tau_bar_star=tau, N_C=N_C
                ))
    elif config.experiment == "drag-demo":
        for Re in config.Re:
            points.append(ExperimentPoint(index=len(points), key=f"Re={Re:g}", Re=Re, N_C=config.N_C[0]))
    else:
        for Re in config.Re:
            for N_C in config.N_C:
                points.append(ExperimentPoint(index=len(points), key=f"Re={Re:g}_NC={N_C}", Re=Re, N_C=N_C))
    return points


def _params_point(config: ExperimentConfig, point: ExperimentPoint) -> Tuple[Rows, Dict]:
    sim = select_params(point.Re, config.beta, config.D)
    return [params_row(sim, point.N_C)], {}


def _error_point(config: ExperimentConfig, point: ExperimentPoint) -> Tuple[Rows, Dict]:
    sim = select_params(point.Re, config.beta, config.D)
    record = measure_truncation_error(sim, point.N_C, config.initial_state, max_mem=config.max_mem)
    row = record.model_dump(include={"Re", "beta", "D", "N_C", "epsilon_C", "epsilon_rmse"})
    return [row], {"series_C": record.series_C, "series_rmse": record.series_rmse}


def _condition_point(config: ExperimentConfig, point: ExperimentPoint) -> Tuple[Rows, Dict]:
    sim = select_params(point.Re, config.beta, config.D)
    op = CarlemanOperator(
        velocity_model(config.D), sim.geometry(), sim.tau_bar_star, point.N_C,
        max_mem=config.max_mem, sparse_limit=config.assemble_limit,
    )
    system = TimeBlockSystem(op, sim.T_star, kind=config.kind, W=config.W)
    rng = np.random.default_rng([config.seed, point.index])
    estimate = condition_number(
        system, tol=config.tol, max_iter=config.max_iter, max_mem=config.max_mem,
        v0=rng.standard_normal(system.dimension),
    )
    row = {
        "Re": point.Re, "N_C": point.N_C, "kind": config.kind, "W": system.W,
        "T_star": sim.T_star, "dimension": system.dimension, "norm_C": estimate.norm_C,
        "kappa": estimate.kappa, "kappa_lower": estimate.kappa_lower,
        "iterations": estimate.iterations, "converged": estimate.converged,
    }
    return [row], {"residual": estimate.residual, "norm_Ainv": estimate.norm_Ainv}


def _be_ratio_point(config: ExperimentConfig, point: ExperimentPoint) -> Tuple[Rows, Dict]:
    tau, N_C, D = point.tau_bar_star, point.N_C, config.D
    a1 = alpha_IF1(tau, D)
    a2 = alpha_F2bar(tau, D)
    value = norm_C(velocity_model(D), tau, N_C, max_mem=config.max_mem)
    row = {
        "tau_bar_star": tau, "N_C": N_C, "alpha_IF1": a1, "alpha_F2bar": a2,
        "alpha_C": alpha_C(a1, a2, N_C), "norm_C": value,
        "be_ratio": be_ratio_bound(tau, N_C, D, value), "be_approx": be_ratio_approx(N_C),
    }
    return [row], {}


def _cost_point(config: ExperimentConfig, point: ExperimentPoint) -> Tuple[Rows, Dict]:
    D, N_C = config.D, point.N_C
    if config.fit is not None:
        chi, c = config.fit.chi, config.fit.c
    else:
        fitted = lookup_condition_fit(D, N_C)
        if fitted is None:
            raise ConfigError(f"no fitted condition scaling for D={D}, N_C={N_C}; set 'fit' in the config")
        chi, c = fitted
    sim = select_params(point.Re, config.beta, D)
    value = norm_C(velocity_model(D), sim.tau_bar_star, N_C, max_mem=config.max_mem)
    report = build_cost_report(
        point.Re, config.beta, D, N_C, config.W, sim.tau_bar_star, value, chi, c,
        epsilon_Q=config.epsilon_Q, N_x=sim.N_x, T_star=sim.T_star,
    )
    row = {
        "Re": point.Re, "N_C": N_C, "tau_bar_star": sim.tau_bar_star, "norm_C": value,
        "alpha_A": report.prefactors.alpha_A, "kappa": report.kappa, "be_ratio": report.be_ratio,
        "n_D": report.qubits.n_D, "n_A": report.qubits.n_A,
        "q_Q": report.queries.rigorous, "q_Q_simplified": report.queries.simplified,
        "q_lower": report.queries.lower_proxy, "q_M": report.probabilities.q_M,
        "q_c": report.classical.q_c, "lambda": report.classical.lam,
        "lambda_meas": report.classical.lam_with_measurement,
    }
    return [row], report.model_dump(mode="json")


def _gate_point(config: ExperimentConfig, point: ExperimentPoint) -> Tuple[Rows, Dict]:
    budget = gate_budget(config.D, point.N_C, config.epsilon, config.W, point.Re)
    row = {
        "Re": point.Re, "D": config.D, "N_C": point.N_C, "epsilon": config.epsilon, "W": config.W,
        "total": budget.total, "simplified": budget.simplified, "relative_gap": budget.relative_gap,
        "epsilon_total": budget.epsilon_total, "bulk_share": budget.bulk_share,
    }
    return [row], {"terms": budget.terms, "components": budget.components, "K": budget.K}


def wall_mask(shape: Tuple[int, ...], axis: int, planes: List[int]) -> np.ndarray:
    """Boolean mask with whole lattice planes normal to ``axis`` set (plane indices wrap)."""
    walls = np.zeros(shape, dtype=bool)
    for plane in planes:
        index = [slice(None)] * len(shape)
        index[axis] = plane % shape[axis]
        walls[tuple(index)] = True
    return walls


def _drag_point(config: ExperimentConfig, point: ExperimentPoint) -> Tuple[Rows, Dict]:
    setup = config.drag
    D = config.D
    sim = select_params(point.Re, config.beta, D, length=setup.length, nu=setup.nu)
    model = velocity_model(D)
    geom = sim.geometry(walls=wall_mask((sim.N_x,) * D, setup.axis, setup.planes))
    spec = config.initial_state
    g0 = initial_state(spec.kind, sim, phi=spec.phi, s=spec.s, sigma=spec.sigma)

    exact = run_lbe(g0, sim, geom).state(sim.T_star)
    op = CarlemanOperator(model, geom, sim.tau_bar_star, point.N_C, max_mem=config.max_mem)
    run = evolve_carleman(carleman_initial(g0, point.N_C, max_mem=config.max_mem), sim.T_star, op)
    approx = FluidState(g=run.first_block[-1], t_star=sim.T_star)

    components = setup.components if setup.components is not None else list(range(D))
    exact_drag = drag_force(exact, model, geom, components, sim=sim, reference_mass=setup.reference_mass)
    approx_drag = drag_force(approx, model, geom, components, sim=sim, reference_mass=setup.reference_mass)

    rows = []
    for i, k in enumerate(components):
        boundary = boundary_state(model, geom, k)
        rows.append({
            "Re": point.Re, "N_C": point.N_C, "T_star": sim.T_star, "k": k, "links": exact_drag.links,
            "F0": exact_drag.F0_star[k], "F_exact": exact_drag.F_star[k], "F_carleman": approx_drag.F_star[k],
            "overlap": boundary.overlap(exact), "normalization": boundary.normalization,
            "identity_residual": overlap_check(exact, model, geom, k),
        })
    detail = {
        "exact": exact_drag.model_dump(),
        "carleman": approx_drag.model_dump(),
        "units": exact_drag.units,
        "F_physical": exact_drag.F_physical,
    }
    return rows, detail


RUNNERS: Dict[str, Callable[[ExperimentConfig, ExperimentPoint], Tuple[Rows, Dict]]] = {
    "params-table": _params_point,
    "carleman-error": _error_point,
    "threshold-scan": _error_point,
    "condition-scaling": _condition_point,
    "be-ratio": _be_ratio_point,
    "cost-report": _cost_point,
    "gate-budget": _gate_point,
    "drag-demo": _drag_point,
}


def run_point(config: ExperimentConfig, point: ExperimentPoint, digest: str) -> PointResult:
    """Run one sweep point; capacity failures are re-raised with the point's parameters attached."""
    started = time.perf_counter()
    try:
        rows, detail = RUNNERS[config.experiment](config, point)
    except CapacityError as e:
        context = {**e.context, "point": point.key}
        raise CapacityError(f"{config.experiment} {point.key}", e.required_bytes, e.limit_bytes, context) from e
    logger.info(f"{config.experiment} {point.key} finished in {time.perf_counter() - started:.2f}s")
    return PointResult(key=point.key, config_hash=digest, rows=rows, detail=detail)


def _point_path(out_dir: Path, key: str) -> Path:
    return out_dir / "points" / f"{key}.json"


def load_point(out_dir: Path, key: str, digest: str) -> Optional[PointResult]:
    """A stored point result for this configuration, or None."""
    path = _point_path(out_dir, key)
    if not path.exists():
        return None
    try:
        result = PointResult(**read_json(path))
    except ValueError as e:
        logger.warning(f"Discarding unreadable point file {path}: {e}")
        return None
    if result.config_hash != digest:
        logger.info(f"Point {key} was produced by a different configuration; recomputing")
        return None
    return result


def summarize(config: ExperimentConfig, rows: Rows) -> Dict[str, Any]:
    """Experiment-level fits and scans over the finished rows."""
    if not rows:
        return {}
    df = pd.DataFrame(rows)
    summary: Dict[str, Any] = {}

    if config.experiment == "carleman-error":
        fits = []
        for Re, group in df.groupby("Re", sort=True):
            points = [(n, e) for n, e in zip(group["N_C"], group["epsilon_C"]) if e > 0]
            try:
                fit = fit_error_model(points)
            except InsufficientDataError as e:
                logger.info(f"No error-model fit at Re={Re}: {e}")
                continue
            fits.append({"Re": float(Re), "E": fit.E, "Gamma": fit.Gamma,
                         "convergent": fit.convergent, "residual": fit.residual})
        summary["error_model"] = fits

    elif config.experiment == "threshold-scan":
        summary["threshold"] = detect_threshold(df).model_dump()

    elif config.experiment == "condition-scaling":
        fits = []
        for N_C, group in df.groupby("N_C", sort=True):
            try:
                fit = fit_power_law(zip(group["Re"], group["kappa"]))
            except InsufficientDataError as e:
                logger.info(f"No power-law fit at N_C={N_C}: {e}")
                continue
            fits.append({"N_C": int(N_C), "chi": fit.chi, "c": fit.c, "residual": fit.residual})
        summary["power_law"] = fits

    elif config.experiment == "be-ratio":
        fits = []
        for tau, group in df.groupby("tau_bar_star", sort=True):
            try:
                fit = fit_be_ratio(group["N_C"].tolist(), group["be_ratio"].tolist())
            except InsufficientDataError as e:
                logger.info(f"No BE-ratio fit at tau={tau}: {e}")
                continue
            fits.append({"tau_bar_star": float(tau), "a": fit.slope, "b": fit.prefactor, "residual": fit.residual})
        summary["be_fit"] = fits

    elif config.experiment == "cost-report":
        lam = df.groupby("N_C", sort=True)["lambda"].first()
        summary["lambda"] = [{"N_C": int(n), "lambda": float(v)} for n, v in lam.items()]
    return summary


def run_experiment(
    config: ExperimentConfig,
    out_dir: Path,
    on_point: Optional[Callable[[str], None]] = None,
) -> ExperimentOutcome:
    """
    Execute every pending sweep point on a worker pool and write the artifacts.

    Artifacts: ``results.csv`` with the experiment's fixed column order,
    ``summary.json`` for experiments with fits, and ``manifest.json``.

    Args:
        config: Validated experiment configuration
        out_dir: Output directory (created if needed)
        on_point: Called with each point key as soon as that point is done

    Returns:
        ExperimentOutcome with the rows in plan order
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config_data = config.model_dump(mode="json")
    digest = config_hash(config_data)
    manifest = Manifest(experiment=config.experiment, config=config_data, config_hash=digest)
    started = time.perf_counter()

    points = plan_points(config)
    results: Dict[str, PointResult] = {}
    pending = []
    for point in points:
        stored = load_point(out_dir, point.key, digest)
        if stored is not None:
            results[point.key] = stored
            if on_point:
                on_point(point.key)
        else:
            pending.append(point)
    resumed = len(results)
    if resumed:
        logger.info(f"Resuming {config.experiment}: {resumed} of {len(points)} points already done")

    def process(point: ExperimentPoint) -> PointResult:
        result = run_point(config, point, digest)
        write_json(result, _point_path(out_dir, point.key))
        return result

    with ThreadPoolExecutor(max_workers=max(1, config.workers)) as executor:
        for result in executor.map(process, pending):
            results[result.key] = result
            if on_point:
                on_point(result.key)

    rows = [row for point in points for row in results[point.key].rows]
    files = {"results.csv": write_csv(rows, out_dir / "results.csv", COLUMNS[config.experiment])}
    summary = summarize(config, rows)
    if summary:
        files["summary.json"] = write_json(summary, out_dir / "summary.json")

    manifest.completed_points = [point.key for point in points]
    manifest.files = files
    manifest.finished = datetime.now().isoformat()
    manifest.wall_clock_seconds = time.perf_counter() - started
    write_manifest(manifest, out_dir)
    logger.info(f"{config.experiment} complete: {len(rows)} rows in {manifest.wall_clock_seconds:.2f}s")
    return ExperimentOutcome(
        experiment=config.experiment, out_dir=str(out_dir), rows=rows,
        summary=summary, files=files, resumed=resumed,
    )
