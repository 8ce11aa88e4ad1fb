"""Write experiment artifacts: CSV tables, JSON documents, COO matrices, trajectory dumps and the run manifest."""

import hashlib
import json
import logging
import os
import struct
import tempfile
from datetime import datetime
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, Field

from carleman_lbm.carleman import carleman_dimension
from carleman_lbm.errors import InvalidParameterError
from carleman_lbm.simulation import SimParams, Trajectory

logger = logging.getLogger("carleman_lbm")

PathLike = Union[str, Path]

_TRAJECTORY_MAGIC = b"CLBT"

PARAMS_COLUMNS = ["N_C", "Re", "N_x", "T_star", "tau_bar_star", "u_star", "dim_C", "dim_A_H"]


def round_half_up(value: float, places: int = 4) -> float:
    """Decimal rounding with ties away from zero, applied to the shortest repr of ``value``."""
    quantum = Decimal(1).scaleb(-places)
    return float(Decimal(repr(float(value))).quantize(quantum, rounding=ROUND_HALF_UP))


def atomic_write_bytes(path: PathLike, data: bytes) -> None:
    """Write to a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def content_hash(data: bytes) -> str:
    """Git blob SHA-1 of ``data``."""
    header = f"blob {len(data)}\0".encode("ascii")
    return hashlib.sha1(header + data).hexdigest()


def file_hash(path: PathLike) -> str:
    return content_hash(Path(path).read_bytes())


def csv_text(rows: Union[pd.DataFrame, Iterable[Dict[str, Any]]], columns: Optional[Sequence[str]] = None) -> str:
    """CSV body with '.' decimals and '\\n' line endings in a fixed column order."""
    df = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(list(rows))
    if columns is not None:
        missing = [c for c in columns if c not in df.columns]
        if missing:
            raise InvalidParameterError(f"CSV rows lack columns {missing}")
        df = df[list(columns)]
    return df.to_csv(index=False, lineterminator="\n")


def write_csv(
    rows: Union[pd.DataFrame, Iterable[Dict[str, Any]]],
    path: PathLike,
    columns: Optional[Sequence[str]] = None,
) -> str:
    """Write a CSV table atomically and return its content hash."""
    data = csv_text(rows, columns).encode("utf-8")
    atomic_write_bytes(path, data)
    logger.info(f"Wrote {path}")
    return content_hash(data)


def write_json(data: Any, path: PathLike) -> str:
    """Write a JSON document (pydantic models are dumped first) and return its content hash."""
    if isinstance(data, BaseModel):
        data = data.model_dump(mode="json")
    payload = (json.dumps(data, indent=2) + "\n").encode("utf-8")
    atomic_write_bytes(path, payload)
    logger.info(f"Wrote {path}")
    return content_hash(payload)


def read_json(path: PathLike) -> Any:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def params_row(sim: SimParams, N_C: int) -> Dict[str, Any]:
    """One parameter-table row; dim_A_H = (T* + 1) dim C."""
    dim_C = carleman_dimension(sim.N * sim.Q, N_C)
    return {
        "N_C": N_C,
        "Re": sim.Re,
        "N_x": sim.N_x,
        "T_star": sim.T_star,
        "tau_bar_star": round_half_up(sim.tau_bar_star),
        "u_star": round_half_up(sim.u_ini_star),
        "dim_C": dim_C,
        "dim_A_H": (sim.T_star + 1) * dim_C,
    }


def coo_text(matrix: sp.spmatrix) -> str:
    """Header "rows cols nnz", then one "row col value" line per stored entry in row-major order."""
    coo = sp.coo_matrix(matrix)
    coo.sum_duplicates()
    order = np.lexsort((coo.col, coo.row))
    lines = [f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}"]
    lines.extend(
        f"{int(i)} {int(j)} {float(v)!r}"
        for i, j, v in zip(coo.row[order], coo.col[order], coo.data[order])
    )
    return "\n".join(lines) + "\n"


def write_coo(matrix: sp.spmatrix, path: PathLike) -> str:
    data = coo_text(matrix).encode("utf-8")
    atomic_write_bytes(path, data)
    return content_hash(data)


def read_coo(path: PathLike) -> sp.coo_matrix:
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 3:
            raise InvalidParameterError(f"{path}: bad COO header {header}")
        rows, cols, nnz = (int(x) for x in header)
        body = np.loadtxt(f, ndmin=2) if nnz else np.zeros((0, 3))
    if body.shape[0] != nnz:
        raise InvalidParameterError(f"{path}: header says {nnz} entries, found {body.shape[0]}")
    return sp.coo_matrix(
        (body[:, 2], (body[:, 0].astype(np.int64), body[:, 1].astype(np.int64))), shape=(rows, cols)
    )


def trajectory_frame(trajectory: Union[Trajectory, np.ndarray], Q: int) -> pd.DataFrame:
    """Long-format table with columns t_star, site, m, g."""
    g = trajectory.g if isinstance(trajectory, Trajectory) else np.asarray(trajectory)
    steps, d = g.shape
    if d % Q:
        raise InvalidParameterError(f"state length {d} is not a multiple of Q={Q}")
    t, flat = np.divmod(np.arange(steps * d), d)
    site, m = np.divmod(flat, Q)
    return pd.DataFrame({"t_star": t, "site": site, "m": m, "g": g.ravel()})


def write_trajectory_csv(trajectory: Union[Trajectory, np.ndarray], Q: int, path: PathLike) -> str:
    return write_csv(trajectory_frame(trajectory, Q), path)


class TrajectoryDump(BaseModel):
    """Contents of a binary trajectory file."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    shape: Tuple[int, ...]
    Q: int
    T_star: int
    g: np.ndarray

    @property
    def D(self) -> int:
        return len(self.shape)


def write_trajectory_binary(
    trajectory: Union[Trajectory, np.ndarray], shape: Sequence[int], Q: int, path: PathLike
) -> str:
    """
    Compact little-endian dump.

    Layout: magic "CLBT", uint32 D, D x uint64 N_i, uint32 Q, uint64 T*, then
    (T*+1) * N * Q float64 values in row-major (t, site, m) order.
    """
    g = trajectory.g if isinstance(trajectory, Trajectory) else np.asarray(trajectory)
    shape = tuple(int(n) for n in shape)
    if g.ndim != 2 or g.shape[1] != int(np.prod(shape)) * Q:
        raise InvalidParameterError(f"trajectory shape {g.shape} does not match lattice {shape} with Q={Q}")
    D = len(shape)
    header = _TRAJECTORY_MAGIC + struct.pack(f"<I{D}QIQ", D, *shape, Q, g.shape[0] - 1)
    data = header + np.ascontiguousarray(g, dtype="<f8").tobytes()
    atomic_write_bytes(path, data)
    return content_hash(data)


def read_trajectory_binary(path: PathLike) -> TrajectoryDump:
    raw = Path(path).read_bytes()
    if raw[:4] != _TRAJECTORY_MAGIC:
        raise InvalidParameterError(f"{path} is not a trajectory dump")
    (D,) = struct.unpack_from("<I", raw, 4)
    offset = 8
    shape = struct.unpack_from(f"<{D}Q", raw, offset)
    offset += 8 * D
    Q, T_star = struct.unpack_from("<IQ", raw, offset)
    offset += 12
    d = int(np.prod(shape)) * Q
    g = np.frombuffer(raw, dtype="<f8", offset=offset)
    if g.size != (T_star + 1) * d:
        raise InvalidParameterError(f"{path}: expected {(T_star + 1) * d} values, found {g.size}")
    return TrajectoryDump(shape=tuple(shape), Q=Q, T_star=T_star, g=g.reshape(T_star + 1, d).astype(np.float64))


class Manifest(BaseModel):
    """Record of one experiment run: config echo, artifact hashes, finished points and wall-clock."""

    experiment: str
    config: Dict[str, Any]
    config_hash: str
    started: str = Field(default_factory=lambda: datetime.now().isoformat())
    finished: Optional[str] = None
    wall_clock_seconds: Optional[float] = None
    files: Dict[str, str] = Field(default_factory=dict)
    completed_points: List[str] = Field(default_factory=list)


def config_hash(config: Dict[str, Any]) -> str:
    return content_hash(json.dumps(config, sort_keys=True).encode("utf-8"))


def write_manifest(manifest: Manifest, out_dir: PathLike) -> Path:
    path = Path(out_dir) / "manifest.json"
    write_json(manifest, path)
    return path


def load_manifest(out_dir: PathLike) -> Optional[Manifest]:
    """The manifest of an earlier run in ``out_dir``, or None when absent or unreadable."""
    path = Path(out_dir) / "manifest.json"
    if not path.exists():
        return None
    try:
        return Manifest(**read_json(path))
    except (json.JSONDecodeError, ValueError) as e:
        logger.warning(f"Ignoring unreadable manifest {path}: {e}")
        return None
