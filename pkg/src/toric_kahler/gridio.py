"""GridFunction text formats.

CSV layout: one header row per axis (``axis,<index>,<nodes...>``), a
``values`` marker row, then node values row-major with the last axis varying
along each line. Floats are written with ``repr`` so finite values round-trip
bit-exactly; nodes outside P are written as ``nan``. Node flags are not stored;
reading recovers them from finiteness (finite → interior, NaN → outside).

The matrix variant is gnuplot's ``matrix nonuniform`` layout for 2D fields.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .potential import INTERIOR, OUTSIDE, GridFunction


def _fmt(v: float) -> str:
    return "nan" if not np.isfinite(v) else repr(float(v))


def grid_to_csv(field: GridFunction) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for i, ax in enumerate(field.axes):
        w.writerow(["axis", i, *(_fmt(a) for a in ax)])
    w.writerow(["values"])
    vals = np.asarray(field.values, dtype=float)
    rows = vals.reshape(-1, vals.shape[-1]) if vals.ndim > 1 else vals[None]
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def grid_from_csv(text: str) -> GridFunction:
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    axes = []
    k = 0
    while k < len(rows) and rows[k][0] == "axis":
        axes.append(np.array([float(a) for a in rows[k][2:]]))
        k += 1
    if not axes or k >= len(rows) or rows[k][0] != "values":
        raise ValidationError("grid CSV needs axis rows followed by a values row")
    shape = tuple(len(a) for a in axes)
    try:
        vals = np.array([float(v) for r in rows[k + 1:] for v in r])
    except ValueError as exc:
        raise ValidationError(f"grid CSV holds a non-numeric entry: {exc}") from exc
    if vals.size != int(np.prod(shape)):
        raise ValidationError(f"grid CSV has {vals.size} values for shape {shape}")
    vals = vals.reshape(shape)
    flags = np.where(np.isfinite(vals), INTERIOR, OUTSIDE)
    return GridFunction(axes, vals, flags)


def grid_to_matrix(field: GridFunction) -> str:
    if len(field.axes) != 2:
        raise ValidationError("the matrix layout is for 2D fields")
    x, y = field.axes
    lines = [" ".join([str(len(y)), *(_fmt(b) for b in y)])]
    for i, a in enumerate(x):
        lines.append(" ".join([_fmt(a), *(_fmt(v) for v in field.values[i])]))
    return "\n".join(lines).replace("nan", "NaN") + "\n"


def write_grid(field: GridFunction, path, matrix: bool = False) -> Path:
    path = Path(path)
    path.write_text(grid_to_matrix(field) if matrix else grid_to_csv(field))
    return path


def read_grid(path) -> GridFunction:
    return grid_from_csv(Path(path).read_text())
