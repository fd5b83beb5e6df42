"""CSV and JSON I/O with full float precision and atomic writes."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .dynamics import COLUMNS, Trajectory
from .errors import InvalidArgumentError
from .protocol import ReadoutScan

PathLike = Union[str, os.PathLike]
SCAN_COLUMNS = ("t_s", "P_up", "shots")


def fmt(x: float) -> str:
    """17 significant digits: enough to round-trip any double."""
    return "%.17g" % float(x)


def write_atomic(path: PathLike, data: Union[str, bytes]) -> Path:
    """Write to a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    raw = data.encode("utf-8") if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(raw)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(path: PathLike, obj) -> Path:
    return write_atomic(path, dumps_json(obj))


def table_to_csv(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join("" if v is None else fmt(v) for v in row) + "\n")
    return buf.getvalue()


def trajectory_csv(traj: Trajectory) -> str:
    return table_to_csv(COLUMNS, traj.table())


def write_trajectory_csv(path: PathLike, traj: Trajectory) -> Path:
    return write_atomic(path, trajectory_csv(traj))


def interleave(state: np.ndarray) -> List[float]:
    """[re0, im0, re1, im1, ...]; matrices are flattened row-major first."""
    flat = np.asarray(state, dtype=complex).reshape(-1)
    out = np.empty(2 * flat.size)
    out[0::2], out[1::2] = flat.real, flat.imag
    return out.tolist()


def deinterleave(values: Sequence[float], shape=None) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.size % 2:
        raise InvalidArgumentError("interleaved array has odd length")
    z = arr[0::2] + 1j * arr[1::2]
    return z.reshape(shape) if shape is not None else z


def trajectory_to_dict(traj: Trajectory) -> dict:
    out = {"columns": {c: traj.column(c) for c in COLUMNS},
           "warnings": list(traj.warnings), "meta": dict(traj.meta)}
    if traj.snapshots is not None:
        out["snapshots"] = [{"shape": list(np.shape(s)), "data": interleave(s)}
                            for s in traj.snapshots]
    return out


def trajectory_from_dict(data: dict) -> Trajectory:
    cols = data["columns"]
    snaps = data.get("snapshots")
    return Trajectory(
        *(np.asarray(cols[c], dtype=float) for c in COLUMNS),
        snapshots=None if snaps is None else [deinterleave(s["data"], s["shape"]) for s in snaps],
        warnings=list(data.get("warnings", [])), meta=dict(data.get("meta", {})))


def read_csv_table(path: PathLike) -> Tuple[List[str], Dict[str, np.ndarray]]:
    """Numeric CSV with a header row; empty cells become NaN."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise InvalidArgumentError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if not rows:
        raise InvalidArgumentError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header) or not all(header):
        raise InvalidArgumentError(f"{path} has a malformed header")
    body = rows[1:]
    if not body:
        raise InvalidArgumentError(f"{path} has no data rows")
    data = np.empty((len(body), len(header)))
    for i, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise InvalidArgumentError(f"{path}:{i}: expected {len(header)} fields, got {len(row)}")
        for j, cell in enumerate(row):
            cell = cell.strip()
            try:
                data[i - 2, j] = float(cell) if cell else np.nan
            except ValueError:
                raise InvalidArgumentError(f"{path}:{i}: non-numeric value {cell!r}") from None
    return header, {h: data[:, j] for j, h in enumerate(header)}


def read_trajectory_csv(path: PathLike) -> Trajectory:
    header, cols = read_csv_table(path)
    missing = [c for c in COLUMNS if c not in cols]
    if missing:
        raise InvalidArgumentError(f"{path} is missing trajectory columns {missing}")
    return Trajectory(*(cols[c] for c in COLUMNS))


def scan_csv(scan: ReadoutScan) -> str:
    shots = [scan.shots] * scan.times.size
    return table_to_csv(SCAN_COLUMNS, zip(scan.times, scan.p_up, shots))


def write_scan_csv(path: PathLike, scan: ReadoutScan) -> Path:
    return write_atomic(path, scan_csv(scan))


def read_scan_csv(path: PathLike, mode: str = "x", seed: Optional[int] = None) -> ReadoutScan:
    """A blank ``shots`` column marks an exact (unsampled) scan."""
    header, cols = read_csv_table(path)
    missing = [c for c in SCAN_COLUMNS if c not in cols]
    if missing:
        raise InvalidArgumentError(f"{path} is missing scan columns {missing}")
    t, p, shots = cols["t_s"], cols["P_up"], cols["shots"]
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(p))):
        raise InvalidArgumentError(f"{path} has blank or non-finite t_s/P_up values")
    if np.all(np.isnan(shots)):
        n = None
    else:
        if np.any(np.isnan(shots)) or np.any(shots != shots[0]) or shots[0] != int(shots[0]):
            raise InvalidArgumentError(f"{path}: shots must be one integer for every row")
        n = int(shots[0])
    if np.any(np.diff(t) < 0):
        raise InvalidArgumentError(f"{path}: t_s must be sorted")
    return ReadoutScan(mode, t, p, n, seed)
