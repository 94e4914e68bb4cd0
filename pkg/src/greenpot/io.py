"""Atomic JSON/CSV writers with a fixed float format."""

from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .dirichlet import GridField
from .geometry import GridDomain, PanelSet

FIELD_HEADER = ("x", "y", "value")
MEASURE_HEADER = ("index", "mx", "my", "weight")


def fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def _atomic_write(path: Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_csv(path, header, rows) -> Path:
    lines = [",".join(header)]
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    return _atomic_write(path, "\n".join(lines) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_json(path, payload) -> Path:
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=False, ensure_ascii=False)
    return _atomic_write(path, text + "\n")


def field_rows(field: GridField):
    centers = field.grid.cell_centers()
    vals = field.masked()
    return ((x, y, v) for (x, y), v in zip(centers, vals))


def mask_rows(grid: GridDomain):
    return ((x, y, 1) for x, y in grid.cell_centers())


def measure_rows(panels: PanelSet, weights):
    return ((i, m[0], m[1], w) for i, (m, w) in enumerate(zip(panels.midpoints, weights)))


def write_field(path, field: GridField) -> Path:
    return write_csv(path, FIELD_HEADER, field_rows(field))


def write_mask(path, grid: GridDomain) -> Path:
    return write_csv(path, FIELD_HEADER, mask_rows(grid))


def write_measure(path, panels: PanelSet, weights) -> Path:
    return write_csv(path, MEASURE_HEADER, measure_rows(panels, weights))
