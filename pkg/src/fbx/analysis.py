"""Measurements on solved fields: rescalings, Weiss densities, volume
densities, cusp classification, blow-up exponents, the standard-window search
and regularity diagnostics.

All ball integrals clip cells to the disk exactly in ``y`` and with a
sub-column midpoint rule in ``x``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .energy import cell_dirichlet, positive_fraction
from .grid import Grid, PositivitySet, ScalarField, Weight, boundary_ring, positivity_set

MIN_RADIUS_CELLS = 4
SIGMA_THRESHOLD = 0.02


class RadiusError(ValueError):
    pass


class DegenerateWindow(RuntimeError):
    """The shrinking-radius search ran out of resolvable radii."""


# ---------------------------------------------------------------------------
# disk clipping
# ---------------------------------------------------------------------------


def _disk_cells(grid: Grid, center, r, gamma=None, line_y=0.0, sub=16):
    """Per-cell area (and optionally Q^2 mass) inside the disk ``B_r(center)``.

    Returns ``(sl, area, mass)`` where ``sl`` indexes the cell block that
    covers the disk.
    """
    cx, cy = center
    h = grid.h
    i0 = max(0, int(math.floor((cx - r - grid.x0) / h)))
    i1 = min(grid.nx - 1, int(math.ceil((cx + r - grid.x0) / h)))
    j0 = max(0, int(math.floor((cy - r - grid.y0) / h)))
    j1 = min(grid.ny - 1, int(math.ceil((cy + r - grid.y0) / h)))
    xs = grid.x0 + h * np.arange(i0, i1 + 1)
    ys = grid.y0 + h * np.arange(j0, j1 + 1)
    # sub-column midpoints inside every cell column
    off = (np.arange(sub) + 0.5) / sub * h
    xm = xs[:-1, None] + off[None, :]                                  # (ni, sub)
    half = np.sqrt(np.maximum(r * r - (xm - cx) ** 2, 0.0))
    lo = np.maximum(ys[:-1, None, None], (cy - half)[None])             # (nj, ni, sub)
    hi = np.minimum(ys[1:, None, None], (cy + half)[None])
    inside = hi > lo
    area = np.where(inside, hi - lo, 0.0).sum(axis=2) * (h / sub)
    mass = None
    if gamma is not None:
        p = 2.0 * gamma + 1.0

        def F(y):
            s = y - line_y
            return np.sign(s) * np.abs(s) ** p / p

        mass = np.where(inside, F(hi) - F(lo), 0.0).sum(axis=2) * (h / sub)
    return (slice(j0, j1), slice(i0, i1)), area, mass


def _check_radius(grid, center, r, need_inside=True):
    if r < MIN_RADIUS_CELLS * grid.h * (1 - 1e-9):
        raise RadiusError(f"radius {r} is below the reliable minimum {MIN_RADIUS_CELLS}h = {MIN_RADIUS_CELLS * grid.h}")
    if need_inside and grid.dist_to_boundary(*center) < r * (1 - 1e-9):
        raise RadiusError(f"ball of radius {r} around {center} leaves the domain")


# ---------------------------------------------------------------------------
# rescaling
# ---------------------------------------------------------------------------


def rescale(u: ScalarField, center, r, gamma, grid: Grid | None = None) -> ScalarField:
    """``u(r y + center) / r**(gamma + 1)`` resampled bilinearly on a unit-scale grid.

    The default target grid covers ``[-1, 1]^2`` with ``ceil(r / h)`` cells
    per unit, so for ``r / h`` integral and a node-centred ``center`` every
    target node lands on a source node.
    """
    g = u.grid
    if g.dist_to_boundary(*center) < r * (1 - 1e-9):
        raise RadiusError(f"ball of radius {r} around {center} leaves the domain")
    if grid is None:
        k = max(1, int(math.ceil(r / g.h - 1e-9)))
        grid = Grid(2 * k + 1, 2 * k + 1, 1.0 / k, -1.0, -1.0, 0.0)
    X, Y = grid.mesh()
    vals = u.sample(center[0] + r * X, center[1] + r * Y) / r ** (gamma + 1.0)
    return ScalarField(grid, np.maximum(vals, 0.0))


# ---------------------------------------------------------------------------
# Weiss density and friends
# ---------------------------------------------------------------------------


def circle_integral(u: ScalarField, center, r, n=128, power=2):
    """Trapezoid rule for ``int_{dB_r} u**power`` with bilinear sampling."""
    th = 2.0 * np.pi * np.arange(n) / n
    vals = u.sample(center[0] + r * np.cos(th), center[1] + r * np.sin(th))
    return float(np.sum(vals ** power) * (2.0 * np.pi * r / n))


def ball_energy(u: ScalarField, w: Weight, center, r):
    """``(int_{B_r} |grad u|^2, int_{B_r} Q^2 chi_{u>0})`` with cells clipped to the disk."""
    g = u.grid
    sl, area, mass = _disk_cells(g, center, r, w.gamma, w.line_y)
    d = cell_dirichlet(u.values)[sl] * (area / g.h ** 2)
    frac = positive_fraction(u.values > 0)[sl]
    return float(d.sum()), float((frac * mass).sum())


def weiss_density(u: ScalarField, w: Weight, center, r, n_circle=128):
    _check_radius(u.grid, center, r)
    g2 = w.gamma + 1.0
    dirichlet, mass = ball_energy(u, w, center, r)
    bdry = circle_integral(u, center, r, n_circle)
    return (dirichlet + mass) / r ** (2.0 * g2) - g2 * bdry / r ** (2.0 * g2 + 1.0)


def weiss_via_mass(u: ScalarField, w: Weight, center, r):
    """Mass-only Weiss quantity ``r^-(2 + 2 gamma) int_{B_r} Q^2 chi_{u>0}``."""
    _check_radius(u.grid, center, r)
    sl, _, mass = _disk_cells(u.grid, center, r, w.gamma, w.line_y)
    frac = positive_fraction(u.values > 0)[sl]
    return float((frac * mass).sum()) / r ** (2.0 + 2.0 * w.gamma)


def unit_ball_mass(gamma):
    """``int_{B_1} |y|^(2 gamma)`` in closed form: the upper bound of the mass density."""
    # polar coordinates: 1/(2g+2) * int_0^{2pi} |sin t|^{2g} dt, Beta-function form
    g2 = 2.0 * gamma
    ang = 2.0 * math.gamma(0.5) * math.gamma((g2 + 1) / 2) / math.gamma(g2 / 2 + 1)
    return ang / (g2 + 2.0)


@dataclass(frozen=True)
class WeissSeries:
    center: tuple
    radii: np.ndarray
    values: np.ndarray
    monotone_defect: float

    @property
    def spread(self):
        return float(self.values.max() - self.values.min()) if self.values.size else 0.0

    def csv(self):
        return "r,W\n" + "".join(f"{r!r},{v!r}\n" for r, v in zip(self.radii.tolist(), self.values.tolist()))


def dyadic_ladder(r_min, r_max):
    radii = []
    r = r_min
    while r <= r_max * (1 + 1e-12):
        radii.append(r)
        r *= 2.0
    return np.array(radii)


def monotone_defect(values):
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return 0.0
    return float(np.maximum(v[:-1] - v[1:], 0.0).max())


def weiss_series(u: ScalarField, w: Weight, center, r_min, r_max, n_circle=128) -> WeissSeries:
    radii = dyadic_ladder(r_min, r_max)
    if radii.size == 0:
        raise RadiusError(f"empty radius ladder for r_min={r_min}, r_max={r_max}")
    vals = np.array([weiss_density(u, w, center, r, n_circle) for r in radii])
    return WeissSeries(tuple(center), radii, vals, monotone_defect(vals))


# ---------------------------------------------------------------------------
# volume density and the cusp classification
# ---------------------------------------------------------------------------


def volume_density(s: PositivitySet, center, r):
    """Fraction of ``B_r(center)`` covered by positive cells (k/4 convention).

    Parts of the ball outside the grid count as zero.
    """
    _check_radius(s.grid, center, r, need_inside=False)
    sl, area, _ = _disk_cells(s.grid, center, r)
    frac = positive_fraction(s.indicator)[sl]
    return float((frac * area).sum() / (math.pi * r * r))


@dataclass(frozen=True)
class FBClassification:
    point: tuple
    density: float
    label: str
    threshold: float

    CSV_HEADER = "x,y,density,label"

    def csv_row(self):
        return f"{self.point[0]!r},{self.point[1]!r},{self.density!r},{self.label}"


def fb_nodes_near_gamma(s: PositivitySet, line_y, band=None):
    """Free-boundary nodes within ``band`` (default ``h``) of the line, row-major ``(i, j)``."""
    g = s.grid
    band = g.h if band is None else band
    ring = boundary_ring(s.indicator)
    near = np.abs(g.y - line_y) <= band * (1 + 1e-9)
    ring &= near[:, None]
    j, i = np.nonzero(ring)
    return np.column_stack([i, j])


def classify_fb_on_gamma(u: ScalarField, w: Weight, threshold=SIGMA_THRESHOLD, radius_cells=MIN_RADIUS_CELLS):
    """Label every free-boundary node within ``h`` of the line as ``S`` or ``Sigma-candidate``.

    The density is taken at ``radius_cells * h``; nodes whose ball leaves the
    domain are skipped.
    """
    s = positivity_set(u)
    g = u.grid
    r = radius_cells * g.h
    out = []
    for i, j in fb_nodes_near_gamma(s, w.line_y):
        p = g.point(i, j)
        if g.dist_to_boundary(*p) < r * (1 - 1e-9):
            continue
        d = volume_density(s, p, r)
        out.append(FBClassification(p, d, "Sigma-candidate" if d < threshold else "S", threshold))
    return out


def gamma_contact_points(u: ScalarField, w: Weight):
    """Points of ``dB{u>0}`` on the line, one per run of adjacent contact nodes.

    A contact node is a zero node within ``h/2`` of the line that touches a
    positive node; each horizontal run of them is reported by the node
    nearest its midpoint, projected onto the line.
    """
    s = positivity_set(u)
    g = u.grid
    nodes = fb_nodes_near_gamma(s, w.line_y, band=0.5 * g.h)
    pts = []
    if len(nodes) == 0:
        return pts
    order = np.lexsort((nodes[:, 0], nodes[:, 1]))
    nodes = nodes[order]
    run = [nodes[0]]
    for a in nodes[1:]:
        if a[1] == run[-1][1] and a[0] == run[-1][0] + 1:
            run.append(a)
            continue
        pts.append(run)
        run = [a]
    pts.append(run)
    out = []
    for run in pts:
        mid = run[(len(run) - 1) // 2] if len(run) % 2 else run[len(run) // 2 - 1]
        x = g.point(mid[0], mid[1])[0]
        if len(run) % 2 == 0:
            x += 0.5 * g.h
        out.append((x, w.line_y))
    return out


# ---------------------------------------------------------------------------
# blow-up exponent
# ---------------------------------------------------------------------------


def sup_on_ball(u: ScalarField, center, r, n_circle=2048):
    """``sup_{B_r} u``: max of nodes inside the ball and dense samples on its boundary."""
    g = u.grid
    X, Y = g.mesh()
    inside = (X - center[0]) ** 2 + (Y - center[1]) ** 2 <= r * r
    best = float(u.values[inside].max()) if inside.any() else 0.0
    th = 2.0 * np.pi * np.arange(n_circle) / n_circle
    ring = u.sample(center[0] + r * np.cos(th), center[1] + r * np.sin(th))
    return max(best, float(ring.max()))


def blowup_exponent(u: ScalarField, center, radii):
    """Least-squares slope of ``log sup_{B_r} u`` against ``log r``."""
    radii = np.asarray(radii, dtype=float)
    if radii.size < 3:
        raise ValueError("need at least 3 radii")
    sups = np.array([sup_on_ball(u, center, r) for r in radii])
    if np.any(sups <= 0):
        raise ValueError(f"sup u vanishes on a ball around {center}: not a free-boundary point")
    slope, _ = np.polyfit(np.log(radii), np.log(sups), 1)
    return float(slope)


# ---------------------------------------------------------------------------
# the shrinking-radius window search
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WindowReport:
    N: float
    N0: float
    rho: float
    left_height: float
    right_height: float
    w: tuple
    v: tuple
    index: int
    attenuation_radius: float


def attenuation_radius(s: PositivitySet, center, eta):
    """Largest radius whose ball sees the positivity set only inside ``|y| <= eta |x|``."""
    g = s.grid
    X, Y = g.mesh()
    dx, dy = X - center[0], Y - center[1]
    bad = s.indicator & (np.abs(dy) > eta * np.abs(dx))
    r = g.dist_to_boundary(*center)
    if bad.any():
        r = min(r, float(np.sqrt(dx[bad] ** 2 + dy[bad] ** 2).min()) * (1 - 1e-9))
    return r


def section_height(s: PositivitySet, center, x_offset, half_height):
    """Largest ``|y - cy|`` of the free boundary on the vertical line(s) ``x = cx +- x_offset``.

    The free boundary on a node column is placed at midpoints between
    vertically adjacent positive and zero nodes. Returns 0 when the line
    crosses no free boundary.
    """
    g = s.grid
    best = 0.0
    for sgn in (1.0, -1.0):
        i = int(round((center[0] + sgn * x_offset - g.x0) / g.h))
        if not 0 <= i < g.nx:
            continue
        col = s.indicator[:, i]
        trans = np.nonzero(col[1:] != col[:-1])[0]
        if trans.size == 0:
            continue
        ymid = g.y0 + (trans + 0.5) * g.h
        dy = np.abs(ymid - center[1])
        dy = dy[dy <= half_height + 1e-12]
        if dy.size:
            best = max(best, float(dy.max()))
    return best


def find_standard_window(u: ScalarField, N, center=(0.0, 0.0), component=None):
    """Shrinking-radius search for a window whose section heights are pinned.

    Starting from the attenuation radius for the cone slope ``1/(4N)``, the
    sections at ``r_i = 1/2 + 2^-(i+1)`` (unit-ball units) are tested for the
    first ``i >= 1`` with height ``>= 2^-(i+1) / (4N)``; the window is then
    normalised so the outer section height is 1.

    Raises :class:`DegenerateWindow` when the radii fall below the grid
    resolution without success.
    """
    if N < 2:
        raise ValueError("N must be >= 2")
    s = positivity_set(u)
    if component is not None:
        s = PositivitySet.from_mask(u.grid, s.component(component))
    g = u.grid
    eta = 1.0 / (4.0 * N)
    r_att = attenuation_radius(s, center, eta)
    if r_att < MIN_RADIUS_CELLS * g.h:
        raise DegenerateWindow(f"attenuation radius {r_att:.3g} is below {MIN_RADIUS_CELLS}h")

    def height(rho):
        return section_height(s, center, rho * r_att, r_att) / r_att

    r_prev, y_prev = 1.0, height(1.0)
    i = 1
    while True:
        r_i = 0.5 + 0.5 * 2.0 ** (-i)
        if 0.5 * 2.0 ** (-i) * r_att < 0.5 * g.h:
            raise DegenerateWindow("search exhausted the resolvable radii: the field vanishes near the center")
        y_i = height(r_i)
        if y_prev > 0 and y_i >= 0.5 * 2.0 ** (-i) * eta:
            n0 = r_prev / y_prev
            return WindowReport(
                N=float(N), N0=n0, rho=r_att * y_prev, left_height=y_i / y_prev, right_height=1.0,
                w=(n0, 1.0), v=(r_i / y_prev, y_i / y_prev), index=i - 1, attenuation_radius=r_att)
        r_prev, y_prev = r_i, y_i
        i += 1


# ---------------------------------------------------------------------------
# regularity diagnostics
# ---------------------------------------------------------------------------


def fb_residual(u: ScalarField, q_nodes, margin=None):
    """``| |grad u|^2 - Q^2 |`` on the second node layer inside the free boundary.

    ``q_nodes`` holds Q at every node. Nodes closer than ``margin`` (default
    ``4h``) to the grid boundary are ignored. Returns ``(max, rms, count)``.
    """
    g = u.grid
    pos = u.values > 0
    layer = ndimage.distance_transform_cdt(pos, metric="taxicab")
    sel = layer == 2
    m = 4 * g.h if margin is None else margin
    X, Y = g.mesh()
    sel &= (X - g.x0 >= m) & (g.x1 - X >= m) & (Y - g.y0 >= m) & (g.y1 - Y >= m)
    if not sel.any():
        return 0.0, 0.0, 0
    gy, gx = np.gradient(u.values, g.h)
    res = np.abs(gx ** 2 + gy ** 2 - np.asarray(q_nodes) ** 2)[sel]
    return float(res.max()), float(np.sqrt(np.mean(res ** 2))), int(sel.sum())


def run_diagnostics(u: ScalarField, w: Weight, margin=None):
    """Empirical regularity constants of a solved field, as ``(key, value)`` rows."""
    g = u.grid
    X, Y = g.mesh()
    pos = u.values > 0
    rows = []
    if not pos.any():
        return [("lipschitz_ratio", 0.0), ("interior_ball_min", 0.0), ("interior_ball_count", 0),
                ("fb_residual_max", 0.0), ("fb_residual_rms", 0.0), ("fb_residual_count", 0),
                ("height_min", 0.0), ("height_max", 0.0)]
    # (a) gradient against max(dist to free boundary, dist to the line)^gamma
    gy, gx = np.gradient(u.values, g.h)
    grad = np.hypot(gx, gy)
    dist_fb = ndimage.distance_transform_edt(pos) * g.h
    scale = np.maximum(dist_fb, np.abs(Y - w.line_y)) ** w.gamma
    free = pos & ~u.boundary_mask
    ok = free & (scale > 0)
    rows.append(("lipschitz_ratio", float((grad[ok] / scale[ok]).max()) if ok.any() else 0.0))
    # (b) interior balls at free-boundary nodes away from the line
    ring = boundary_ring(pos)
    ratios = []
    for j, i in zip(*np.nonzero(ring)):
        p = g.point(i, j)
        d = abs(p[1] - w.line_y)
        r = 0.5 * d
        if r < MIN_RADIUS_CELLS * g.h or g.dist_to_boundary(*p) < r:
            continue
        qmin = (d - r) ** w.gamma
        th = 2.0 * np.pi * np.arange(64) / 64
        vals = u.sample(p[0] + 0.5 * r * np.cos(th), p[1] + 0.5 * r * np.sin(th))
        ratios.append(float(vals.max()) / (r * qmin))
    rows.append(("interior_ball_min", min(ratios) if ratios else 0.0))
    rows.append(("interior_ball_count", len(ratios)))
    # (c) free-boundary condition |grad u|^2 = Q^2
    rmax, rrms, cnt = fb_residual(u, w(X, Y), margin)
    rows += [("fb_residual_max", rmax), ("fb_residual_rms", rrms), ("fb_residual_count", cnt)]
    # (d) column heights of the positivity set above/below the line
    heights = np.where(pos, np.abs(Y - w.line_y), -np.inf).max(axis=0)
    cols = pos.any(axis=0)
    rows += [("height_min", float(heights[cols].min())), ("height_max", float(heights[cols].max()))]
    return rows
