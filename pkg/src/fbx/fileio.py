"""Readers and writers for field CSV, pattern PGM and small CSV tables.

Field CSV: the line ``nx,ny,h,x0,y0,gamma,line_y``, one line with those
values, then ``ny`` rows of ``nx`` values (row ``j`` is ``y`` ascending).
Floats are written with ``repr`` so every file round-trips exactly.
"""
from __future__ import annotations

import csv
import io
import math

import numpy as np

from .grid import Grid, PositivitySet, ScalarField, Weight, boundary_ring

FIELD_HEADER = "nx,ny,h,x0,y0,gamma,line_y"


def _num(v):
    return repr(float(v))


def field_to_csv(u: ScalarField, gamma) -> str:
    g = u.grid
    lines = [FIELD_HEADER, ",".join([str(g.nx), str(g.ny), _num(g.h), _num(g.x0), _num(g.y0), _num(gamma),
                                     _num(g.gamma_line_y)])]
    for row in u.values:
        lines.append(",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def field_from_csv(text: str):
    """Inverse of :func:`field_to_csv`; returns ``(field, weight)``."""
    rows = [ln for ln in text.splitlines() if ln.strip()]
    if not rows or rows[0].strip() != FIELD_HEADER:
        raise ValueError(f"field CSV must start with '{FIELD_HEADER}'")
    try:
        nx_s, ny_s, *rest = rows[1].split(",")
        nx, ny = int(nx_s), int(ny_s)
        h, x0, y0, gamma, line_y = (float(v) for v in rest)
    except ValueError as exc:
        raise ValueError(f"malformed field CSV parameter line: {rows[1]!r}") from exc
    if len(rows) != ny + 2:
        raise ValueError(f"expected {ny} value rows, found {len(rows) - 2}")
    vals = np.array([[float(v) for v in r.split(",")] for r in rows[2:]])
    if vals.shape != (ny, nx):
        raise ValueError(f"value block has shape {vals.shape}, expected {(ny, nx)}")
    grid = Grid(nx, ny, h, x0, y0, line_y)
    return ScalarField(grid, vals), Weight(gamma, line_y)


def pattern_to_pgm(s: PositivitySet) -> str:
    """Plain PGM: 255 positive, 128 free-boundary node, 0 otherwise; top row is the largest ``y``."""
    img = np.where(s.indicator, 255, np.where(boundary_ring(s.indicator), 128, 0))[::-1]
    g = s.grid
    lines = ["P2", f"{g.nx} {g.ny}", "255"]
    lines += [" ".join(str(int(v)) for v in row) for row in img]
    return "\n".join(lines) + "\n"


def pattern_from_pgm(text: str, grid: Grid) -> PositivitySet:
    toks = [t for ln in text.splitlines() if not ln.startswith("#") for t in ln.split()]
    if not toks or toks[0] != "P2":
        raise ValueError("not a plain PGM (P2) file")
    nx, ny, _ = int(toks[1]), int(toks[2]), int(toks[3])
    if (ny, nx) != grid.shape:
        raise ValueError("PGM size does not match the grid")
    img = np.array([int(t) for t in toks[4:]]).reshape(ny, nx)[::-1]
    return PositivitySet.from_mask(grid, img == 255)


def rows_to_csv(header, rows) -> str:
    """CSV text with floats in round-trip precision and ``nan`` spelled out."""
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for row in rows:
        wr.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return "nan" if math.isnan(f) else repr(f)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def csv_to_rows(text: str):
    """``(header, rows)`` with numeric cells parsed back to ``int``/``float`` and booleans to ``bool``."""
    rd = list(csv.reader(io.StringIO(text)))
    if not rd:
        return [], []

    def parse(c):
        if c in ("true", "false"):
            return c == "true"
        try:
            return int(c)
        except ValueError:
            pass
        try:
            return float(c)
        except ValueError:
            return c

    return rd[0], [[parse(c) for c in r] for r in rd[1:]]
