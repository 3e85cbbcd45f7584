"""Grids, fields, the degenerate weight and positivity sets."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import kernels

INFINITE = math.inf
"""Sentinel returned by :func:`component_separation` when nothing competes."""


@dataclass(frozen=True)
class Grid:
    """Uniform node grid on a rectangle; node ``(i, j)`` sits at ``(x0 + i h, y0 + j h)``."""

    nx: int
    ny: int
    h: float
    x0: float = 0.0
    y0: float = 0.0
    gamma_line_y: float = 0.0

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise ValueError(f"grid needs at least 3x3 nodes, got {self.nx}x{self.ny}")
        if not self.h > 0:
            raise ValueError(f"grid spacing must be > 0, got {self.h}")

    @property
    def shape(self):
        return (self.ny, self.nx)

    @property
    def x(self):
        return self.x0 + self.h * np.arange(self.nx)

    @property
    def y(self):
        return self.y0 + self.h * np.arange(self.ny)

    @property
    def x1(self):
        return self.x0 + self.h * (self.nx - 1)

    @property
    def y1(self):
        return self.y0 + self.h * (self.ny - 1)

    def mesh(self):
        return np.meshgrid(self.x, self.y)

    def point(self, i, j):
        return (self.x0 + i * self.h, self.y0 + j * self.h)

    def index(self, x, y):
        """Nearest node index ``(i, j)`` to the point ``(x, y)``."""
        return (int(round((x - self.x0) / self.h)), int(round((y - self.y0) / self.h)))

    def perimeter(self):
        m = np.zeros(self.shape, dtype=bool)
        m[0, :] = m[-1, :] = m[:, 0] = m[:, -1] = True
        return m

    def dist_to_boundary(self, x, y):
        return min(x - self.x0, self.x1 - x, y - self.y0, self.y1 - y)

    @classmethod
    def covering(cls, x0, x1, y0, y1, h, line_y=0.0):
        """Grid with spacing ``h`` whose nodes span ``[x0, x1] x [y0, y1]``."""
        nx = int(round((x1 - x0) / h)) + 1
        ny = int(round((y1 - y0) / h)) + 1
        return cls(nx, ny, h, x0, y0, line_y)


@dataclass(frozen=True)
class Weight:
    """The degenerate weight ``Q(x, y) = |y - line_y|**gamma``."""

    gamma: float
    line_y: float = 0.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")

    def __call__(self, x, y):
        return np.abs(np.asarray(y, dtype=float) - self.line_y) ** self.gamma

    def q2_antiderivative(self, y):
        """Odd antiderivative of ``|y - line_y|**(2 gamma)``, continuous across the line."""
        s = np.asarray(y, dtype=float) - self.line_y
        p = 2.0 * self.gamma + 1.0
        return np.sign(s) * np.abs(s) ** p / p


def eval_weight(w: Weight, p):
    return float(w(p[0], p[1]))


def cell_weight_mass(w: Weight, x_lo, x_hi, y_lo, y_hi):
    """Exact integral of ``Q**2`` over ``[x_lo, x_hi] x [y_lo, y_hi]``.

    The antiderivative is odd about the line, so a cell straddling it is
    handled as the sum of its two halves without an explicit split.
    """
    if x_hi < x_lo:
        raise ValueError("x_lo must not exceed x_hi")
    return (x_hi - x_lo) * (w.q2_antiderivative(y_hi) - w.q2_antiderivative(y_lo))


def cell_masses(grid: Grid, w: Weight):
    """Exact ``Q**2`` mass of every grid cell, shape ``(ny - 1, nx - 1)``."""
    F = w.q2_antiderivative(grid.y)
    row = grid.h * np.diff(F)
    return np.repeat(row[:, None], grid.nx - 1, axis=1)


def node_masses(grid: Grid, w: Weight):
    """Quarter of the mass of every cell adjacent to a node.

    With the k/4 mixed-cell convention the mass term is exactly
    ``sum(node_masses[positive])``.
    """
    cm = cell_masses(grid, w)
    m = np.zeros(grid.shape)
    m[:-1, :-1] += cm
    m[:-1, 1:] += cm
    m[1:, :-1] += cm
    m[1:, 1:] += cm
    return 0.25 * m


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Nonnegative node values with a Dirichlet mask that always covers the perimeter."""

    grid: Grid
    values: np.ndarray
    boundary_mask: np.ndarray = field(default=None)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        if np.any(v < 0):
            raise ValueError("field values must be nonnegative")
        bm = self.grid.perimeter() if self.boundary_mask is None else np.array(self.boundary_mask, dtype=bool)
        if bm.shape != self.grid.shape:
            raise ValueError("boundary mask shape does not match grid")
        bm = bm | self.grid.perimeter()
        v.flags.writeable = False
        bm.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "boundary_mask", bm)

    @classmethod
    def zeros(cls, grid, boundary_mask=None):
        return cls(grid, np.zeros(grid.shape), boundary_mask)

    @classmethod
    def from_function(cls, grid, fn, boundary_mask=None):
        X, Y = grid.mesh()
        return cls(grid, np.maximum(fn(X, Y), 0.0), boundary_mask)

    def with_values(self, values):
        return ScalarField(self.grid, values, self.boundary_mask)

    def sample(self, xs, ys):
        """Bilinear interpolation at arbitrary points; zero outside the grid."""
        g = self.grid
        fi = (np.asarray(xs, dtype=float) - g.x0) / g.h
        fj = (np.asarray(ys, dtype=float) - g.y0) / g.h
        return ndimage.map_coordinates(self.values, [fj, fi], order=1, mode="constant", cval=0.0)


@dataclass(frozen=True, eq=False)
class PositivitySet:
    grid: Grid
    indicator: np.ndarray
    labels: np.ndarray
    count: int

    @classmethod
    def from_mask(cls, grid, mask):
        mask = np.ascontiguousarray(mask, dtype=bool)
        labels, count = kernels.label_components(mask)
        labels = np.asarray(labels, dtype=np.int64)
        mask.flags.writeable = False
        labels.flags.writeable = False
        return cls(grid, mask, labels, int(count))

    def component(self, comp_id):
        if not 1 <= comp_id <= self.count:
            raise KeyError(f"unknown component id {comp_id} (have {self.count})")
        return self.labels == comp_id


def positivity_set(u: ScalarField) -> PositivitySet:
    return PositivitySet.from_mask(u.grid, u.values > 0)


def boundary_ring(mask):
    """Zero nodes 4-adjacent to a ``True`` node, as a mask."""
    m = np.asarray(mask, dtype=bool)
    nb = np.zeros_like(m)
    nb[1:, :] |= m[:-1, :]
    nb[:-1, :] |= m[1:, :]
    nb[:, 1:] |= m[:, :-1]
    nb[:, :-1] |= m[:, 1:]
    return nb & ~m


def free_boundary_nodes(s: PositivitySet):
    """Zero nodes next to the positivity set as ``(i, j)`` rows in row-major order."""
    j, i = np.nonzero(boundary_ring(s.indicator))
    return np.column_stack([i, j]).astype(np.int64)


def _window_mask(grid, window):
    if window is None:
        return np.ones(grid.shape, dtype=bool)
    x_lo, x_hi, y_lo, y_hi = window
    X, Y = grid.mesh()
    eps = 1e-9 * grid.h
    return (X >= x_lo - eps) & (X <= x_hi + eps) & (Y >= y_lo - eps) & (Y <= y_hi + eps)


def component_separation(s: PositivitySet, comp_id, window=None):
    """Smallest distance inside ``window`` from component ``comp_id`` to any other component.

    ``window`` is ``(x_lo, x_hi, y_lo, y_hi)`` or ``None`` for the whole grid.
    Returns :data:`INFINITE` when either side is empty in the window.
    """
    own = s.component(comp_id)
    win = _window_mask(s.grid, window)
    own = own & win
    other = s.indicator & ~(s.labels == comp_id) & win
    if not own.any() or not other.any():
        return INFINITE
    dist = ndimage.distance_transform_edt(~other)
    return float(dist[own].min() * s.grid.h)
