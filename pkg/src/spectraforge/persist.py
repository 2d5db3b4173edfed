"""File formats: loss history and density CSV, parameter checkpoints, PGM images, JSON."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .network import NetworkLayout, ParamVector

__all__ = [
    "density_to_pgm",
    "read_density_csv",
    "read_params",
    "write_density_csv",
    "write_json",
    "write_loss_history",
    "write_params",
    "write_pgm",
]

LOSS_HEADER = ("epoch", "L_sum", "L_in", "L_w", "L_b", "lambda", "mass", "mu", "lambda_mult", "seconds")


def fmt(v) -> str:
    """Shortest round-tripping repr; ``nan``/``inf`` spelled out."""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def write_loss_history(path: str | Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOSS_HEADER)
        for r in rows:
            w.writerow([fmt(r[k]) for k in LOSS_HEADER])


def read_loss_history(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in LOSS_HEADER}


def write_density_csv(path: str | Path, points: np.ndarray, inside: np.ndarray, rho: np.ndarray) -> None:
    """Rows in grid lexicographic order: ``x,y[,z],inside,rho``."""
    d = points.shape[1]
    names = ("x", "y", "z")[:d]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*names, "inside", "rho"])
        for p, m, r in zip(points, inside, rho):
            w.writerow([*(fmt(c) for c in p), int(bool(m)), fmt(r)])


def read_density_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[-2:] != ["inside", "rho"] or header[:-2] not in (["x", "y"], ["x", "y", "z"]):
            raise ConfigError(f"{path}: expected header x,y[,z],inside,rho, got {header}")
        data = np.array([[float(c) for c in row] for row in reader if row], dtype=np.float64)
    if data.size == 0:
        raise ConfigError(f"{path}: no density rows")
    d = len(header) - 2
    return data[:, :d], data[:, d].astype(bool), data[:, d + 1]


def write_params(stem: str | Path, params: ParamVector, extra: dict | None = None) -> None:
    """``<stem>.json`` layout header plus ``<stem>.bin`` raw little-endian float64 values."""
    stem = Path(stem)
    header = {
        "layout": params.layout.to_dict(),
        "n_params": len(params),
        "dtype": "<f8",
        "offsets": {k: [s, list(shape)] for k, (s, shape) in params.layout.offsets.items()},
        **(extra or {}),
    }
    stem.with_suffix(".bin").write_bytes(params.values.astype("<f8").tobytes())
    write_json(stem.with_suffix(".json"), header)


def read_params(stem: str | Path) -> ParamVector:
    stem = Path(stem)
    header = json.loads(stem.with_suffix(".json").read_text())
    layout = NetworkLayout(**header["layout"])
    values = np.frombuffer(stem.with_suffix(".bin").read_bytes(), dtype="<f8").astype(np.float64)
    if values.size != header["n_params"]:
        raise ConfigError(f"{stem}: header says {header['n_params']} parameters, file holds {values.size}")
    return ParamVector(layout, values)


def write_json(path: str | Path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def density_to_pgm(
    points: np.ndarray, inside: np.ndarray, rho: np.ndarray, rho_lo: float, rho_hi: float, *, slice_axis_value: float | None = None
) -> np.ndarray:
    """8-bit image array (row 0 = largest y); outside nodes are 128.

    For 3D input pass ``slice_axis_value``: the grid plane with ``z`` nearest
    to it is exported.
    """
    points = np.asarray(points, dtype=np.float64)
    inside = np.asarray(inside, dtype=bool)
    rho = np.asarray(rho, dtype=np.float64)
    if points.shape[1] == 3:
        if slice_axis_value is None:
            raise ConfigError("3D densities need a slice (e.g. --slice z=0.5)")
        zs = np.unique(points[:, 2])
        z0 = zs[np.argmin(np.abs(zs - slice_axis_value))]
        keep = points[:, 2] == z0
        points, inside, rho = points[keep, :2], inside[keep], rho[keep]
    elif slice_axis_value is not None:
        raise ConfigError("--slice only applies to 3D densities")
    xs, ys = np.unique(points[:, 0]), np.unique(points[:, 1])
    if xs.size * ys.size != points.shape[0]:
        raise ConfigError("density rows do not form a complete grid")
    # lexicographic rows: x slowest, so reshape to (nx, ny) then put max-y on top
    t = np.clip((rho - rho_lo) / (rho_hi - rho_lo), 0.0, 1.0)
    px = np.floor(t * 255.0 + 0.5).astype(np.uint8)
    px[~inside] = 128
    return px.reshape(xs.size, ys.size).T[::-1].copy()


def write_pgm(path: str | Path, image: np.ndarray) -> None:
    image = np.asarray(image, dtype=np.uint8)
    h, w = image.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + image.tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5" or parts[2] != b"255":
        raise ConfigError(f"{path}: not an 8-bit binary PGM")
    w, h = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3][: w * h], dtype=np.uint8).reshape(h, w)
