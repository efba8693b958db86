"""
Export Service

CSV and JSON emission for trajectories, kernel and correlation tables,
dynamical maps and run reports. Numbers are written with
Settings.CSV_PRECISION significant digits so cross-solver comparisons survive
the round trip through text.
"""

import csv
import json
import logging
from pathlib import Path
from typing import Any, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from app.core.config import get_settings
from app.core.exceptions import OutputError
from app.schemas.dynamics import Trajectory
from app.schemas.kernels import CorrelationSet, KernelTable
from app.schemas.model import Model
from app.schemas.reduced import ChoiMatrix, DynamicalMap, ReducedState

logger = logging.getLogger(__name__)


def ensure_directory(path: str) -> Path:
    """Create the output directory (and parents) or fail with OutputError."""
    directory = Path(path)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OutputError(f"cannot create output directory {directory}: {e.strerror or e}") from e
    if not directory.is_dir():
        raise OutputError(f"output path {directory} is not a directory")
    return directory


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[float]],
              precision: Optional[int] = None) -> Path:
    """Write numeric rows with full precision."""
    precision = get_settings().CSV_PRECISION if precision is None else precision
    try:
        with open(path, "w", newline="", encoding="utf-8") as csvfile:
            writer = csv.writer(csvfile)
            writer.writerow(header)
            for row in rows:
                writer.writerow([f"{float(x):.{precision}g}" for x in row])
    except OSError as e:
        raise OutputError(f"cannot write {path}: {e.strerror or e}") from e
    logger.info(f"Wrote {path}")
    return path


def write_json(path: Path, payload: Any) -> Path:
    try:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")
    except OSError as e:
        raise OutputError(f"cannot write {path}: {e.strerror or e}") from e
    logger.info(f"Wrote {path}")
    return path


def trajectory_rows(
    model: Model,
    trajectory: Trajectory,
    reduced: Optional[List[ReducedState]] = None,
    constants: Optional[Tuple[np.ndarray, np.ndarray]] = None,
    include_modes: bool = False,
) -> Tuple[List[str], List[List[float]]]:
    """
    Columns: t, Re/Im c_i, Re/Im rho_ij (row-major), norm, p0, p1, then
    optionally Re/Im g_i(n) for every level and mode.
    """
    d = trajectory.d
    header = ["t"]
    for i in range(d):
        header += [f"re_c{i}", f"im_c{i}"]
    if reduced is not None:
        for i in range(d):
            for j in range(d):
                header += [f"re_rho{i}{j}", f"im_rho{i}{j}"]
    if trajectory.norms is not None:
        header.append("norm")
    if constants is not None:
        header += ["p0", "p1"]
    if include_modes:
        if not trajectory.has_modes:
            raise OutputError(f"{trajectory.solver.value} trajectory has no mode functions to export")
        for i in range(d):
            for n in range(model.n_modes):
                header += [f"re_g{i}_{n}", f"im_g{i}_{n}"]

    rows = []
    for k, t in enumerate(trajectory.times):
        row = [t]
        row += _interleave(trajectory.c[k])
        if reduced is not None:
            row += _interleave(reduced[k].rho.ravel())
        if trajectory.norms is not None:
            row.append(trajectory.norms[k])
        if constants is not None:
            row += [constants[0][k], constants[1][k]]
        if include_modes:
            row += _interleave(trajectory.g[k].ravel())
        rows.append(row)
    return header, rows


def kernel_rows(table: KernelTable) -> Tuple[List[str], List[List[float]]]:
    """Columns: t, then Re/Im of M_kl row-major, then Re/Im of G_k."""
    header = ["t"]
    parts = []
    if table.M_values is not None:
        d = table.M_values.shape[1]
        header += [f"{p}_M{k}{l}" for k in range(d) for l in range(d) for p in ("re", "im")]
        parts.append(table.M_values.reshape(table.times.size, -1))
    if table.G_values is not None:
        d = table.G_values.shape[1]
        header += [f"{p}_G{k}" for k in range(d) for p in ("re", "im")]
        parts.append(table.G_values)
    rows = []
    for i, t in enumerate(table.times):
        row = [t]
        for part in parts:
            row += _interleave(part[i])
        rows.append(row)
    return header, rows


def correlation_rows(corr: CorrelationSet) -> Tuple[List[str], List[List[float]]]:
    """Columns: t, then a_{mn,pq}, b_{mn,p}, c_{p,q} as Re/Im pairs."""
    d = corr.d
    r = range(d)
    header = ["t"]
    header += [f"{p}_a{m}{n}_{s}{q}" for m in r for n in r for s in r for q in r for p in ("re", "im")]
    header += [f"{p}_b{m}{n}_{s}" for m in r for n in r for s in r for p in ("re", "im")]
    header += [f"{p}_c{s}{q}" for s in r for q in r for p in ("re", "im")]
    n_t = corr.times.size
    flat = np.concatenate([corr.a.reshape(n_t, -1), corr.b.reshape(n_t, -1), corr.c.reshape(n_t, -1)], axis=1)
    return header, [[t] + _interleave(flat[i]) for i, t in enumerate(corr.times)]


def map_payload(dyn_map: DynamicalMap, choi: Optional[ChoiMatrix] = None) -> dict:
    """JSON form of a map: S and optionally the Choi matrix as [re, im] nested lists."""
    payload = {"t": dyn_map.t, "d": dyn_map.d, "S": _complex_nested(dyn_map.S)}
    if choi is not None:
        payload["choi"] = _complex_nested(choi.matrix)
    return payload


def _interleave(values: np.ndarray) -> List[float]:
    out = []
    for z in np.asarray(values).ravel():
        out += [float(np.real(z)), float(np.imag(z))]
    return out


def _complex_nested(arr: np.ndarray):
    return np.stack([arr.real, arr.imag], axis=-1).tolist()
