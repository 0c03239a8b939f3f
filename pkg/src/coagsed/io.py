"""CSV/JSON serialization.  Every file starts with a ``# {json}`` header line."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .grid import Field2D, Grid2D

__all__ = ["fmt", "read_field", "read_header", "write_csv", "write_field", "write_json"]


def fmt(x) -> str:
    """17 significant digits, enough to round-trip a double."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".17g")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def _header_line(header: dict) -> str:
    return "# " + json.dumps(_jsonable(header), sort_keys=True) + "\n"


def write_csv(path, columns: list[str], rows, header: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="\n") as fh:
        fh.write(_header_line(header))
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(fmt(x) for x in row) + "\n")
    return path


def write_json(path, payload: dict, header: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="\n") as fh:
        fh.write(_header_line(header))
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def write_field(path, field: Field2D, header: dict) -> Path:
    """Rows ``(y, v, H)`` in ``y``-major order; the header records grid and time."""
    g = field.grid
    head = dict(header)
    head.update({"grid": g.spec(), "t": field.t})
    Y, V = g.mesh()
    rows = zip(Y.ravel(), V.ravel(), field.values.ravel())
    return write_csv(path, ["y", "v", "H"], rows, head)


def read_header(path) -> dict:
    with Path(path).open() as fh:
        first = fh.readline()
    if not first.startswith("# "):
        raise ConfigError(f"{path}: missing JSON header line")
    try:
        return json.loads(first[2:])
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON header ({exc})") from exc


def read_field(path) -> tuple[Field2D, dict]:
    header = read_header(path)
    try:
        grid = Grid2D(**header["grid"])
        data = np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)
        values = data[:, 2].reshape(grid.ny, grid.nv)
        t = float(header["t"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: malformed field snapshot ({exc})") from exc
    return Field2D(values, grid, t), header
