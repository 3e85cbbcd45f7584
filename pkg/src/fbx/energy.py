"""The discrete functional ``J_Q(u) = int |grad u|^2 + Q^2 chi_{u>0}``.

Dirichlet part: each cell contributes half the sum of its four squared edge
differences, which is exact for bilinear-free linear fields and equals the
weighted graph-Laplacian form ``u^T L u`` (weight 1 on interior edges, 1/2 on
perimeter edges). Mass part: each cell contributes ``k/4`` of its exact
``Q^2`` mass, ``k`` being the number of positive corners.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .grid import PositivitySet, ScalarField, Weight, cell_masses, node_masses, positivity_set


@dataclass(frozen=True)
class EnergyReport:
    dirichlet: float
    mass: float
    total: float

    @classmethod
    def of(cls, dirichlet, mass):
        d, m = float(dirichlet), float(mass)
        return cls(d, m, d + m)

    def csv_row(self):
        return f"{self.dirichlet!r},{self.mass!r},{self.total!r}"

    CSV_HEADER = "dirichlet,mass,total"


def cell_region(grid, region):
    """Boolean mask over cells for ``region``.

    ``region`` may be ``None`` (all cells), a window ``(x_lo, x_hi, y_lo,
    y_hi)`` selecting the cells lying inside it, or a boolean cell mask.
    """
    shape = (grid.ny - 1, grid.nx - 1)
    if region is None:
        return np.ones(shape, dtype=bool)
    if isinstance(region, np.ndarray):
        if region.shape != shape:
            raise ValueError(f"cell mask must have shape {shape}")
        return region.astype(bool)
    x_lo, x_hi, y_lo, y_hi = region
    eps = 1e-9 * grid.h
    xs, ys = grid.x, grid.y
    cx = (xs[:-1] >= x_lo - eps) & (xs[1:] <= x_hi + eps)
    cy = (ys[:-1] >= y_lo - eps) & (ys[1:] <= y_hi + eps)
    return cy[:, None] & cx[None, :]


def cell_dirichlet(values):
    a = np.asarray(values, dtype=float)
    return 0.5 * ((a[:-1, 1:] - a[:-1, :-1]) ** 2 + (a[1:, 1:] - a[1:, :-1]) ** 2
                  + (a[1:, :-1] - a[:-1, :-1]) ** 2 + (a[1:, 1:] - a[:-1, 1:]) ** 2)


def positive_fraction(mask):
    """Fraction of positive corners of every cell (the k/4 convention)."""
    p = np.asarray(mask, dtype=float)
    return 0.25 * (p[:-1, :-1] + p[:-1, 1:] + p[1:, :-1] + p[1:, 1:])


def dirichlet_energy(u: ScalarField, region=None):
    cells = cell_region(u.grid, region)
    return float(cell_dirichlet(u.values)[cells].sum())


def volume_energy(s: PositivitySet, w: Weight, region=None):
    cells = cell_region(s.grid, region)
    return float((positive_fraction(s.indicator) * cell_masses(s.grid, w))[cells].sum())


def total_energy(u: ScalarField, w: Weight, region=None) -> EnergyReport:
    return EnergyReport.of(dirichlet_energy(u, region), volume_energy(positivity_set(u), w, region))


def pattern_energy(u: ScalarField, pattern, w: Weight, region=None) -> EnergyReport:
    """Energy with the mass taken from an explicit node pattern rather than ``u > 0``."""
    s = PositivitySet.from_mask(u.grid, np.asarray(pattern, dtype=bool) | (u.values > 0))
    return EnergyReport.of(dirichlet_energy(u, region), volume_energy(s, w, region))


def improvement_tol(total):
    """Absolute slack below which an energy decrease does not count as strict."""
    return 1e-11 * (abs(total) + 1e-12)


def apply_flip(u: ScalarField, w: Weight, node, pattern=None, radius=None, tol=1e-12):
    """Toggle ``node`` in the pattern and re-solve.

    ``radius=None`` re-solves on the whole grid; an integer ``r`` re-solves
    only the ``(2r+1)^2`` box around the node with everything outside held
    fixed. Returns ``(new_field, new_pattern, delta_J)``.
    """
    from .solver import harmonic_solve

    i, j = node
    if u.boundary_mask[j, i]:
        raise ValueError(f"node {node} is a Dirichlet node and cannot be flipped")
    pat = (u.values > 0) if pattern is None else np.array(pattern, dtype=bool)
    pat = pat & ~u.boundary_mask
    new_pat = pat.copy()
    new_pat[j, i] = not pat[j, i]
    m = node_masses(u.grid, w)[j, i]
    dm = m if new_pat[j, i] else -m
    if radius is None:
        v = harmonic_solve(new_pat, u, tol=tol)
        dd = dirichlet_energy(v) - dirichlet_energy(u)
    else:
        fixed = np.ascontiguousarray(u.boundary_mask)
        free = np.ascontiguousarray(new_pat)
        vals = np.array(u.values)
        j0, i0, box, dd = kernels.patch_resolve(vals, free, fixed, j, i, int(radius))
        box = np.maximum(box, 0.0)
        vals[j0:j0 + box.shape[0], i0:i0 + box.shape[1]] = box
        v = u.with_values(vals)
    return v, new_pat, float(dd + dm)


def flip_delta(u: ScalarField, w: Weight, node, pattern=None, radius=None, tol=1e-12):
    """Change of ``J_Q`` caused by toggling ``node`` in the positivity pattern.

    ``u`` is assumed harmonic on ``pattern`` (default: ``u > 0``). The mass of
    the flipped pattern is charged even where the re-solved field vanishes.
    """
    return apply_flip(u, w, node, pattern, radius, tol)[2]
