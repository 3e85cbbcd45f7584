"""Horizontal shears, the increase/decrease estimates and the sagging competitor.

The shear with amplitude ``t`` and pivot ``p`` maps ``(x, y)`` to
``(x, y + sign * t * (x - p))``. Fields are transported by bilinear
resampling; positivity sets by resampling their indicator and thresholding
at 1/2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .energy import dirichlet_energy, volume_energy
from .grid import PositivitySet, ScalarField, Weight, component_separation, positivity_set


class MarginError(ValueError):
    """The support of the field comes too close to the edge of the shear window."""


class HypothesisError(ValueError):
    """A set violates the hypotheses of the mass-decrease estimate."""


@dataclass(frozen=True)
class ShearSpec:
    t: float
    pivot_x: float = 0.0
    sign: int = 1

    def __post_init__(self):
        if not abs(self.t) < 1:
            raise ValueError(f"|t| must be < 1, got {self.t}")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")

    def shift(self, x):
        """Vertical offset added to ``y`` at abscissa ``x``."""
        return self.sign * self.t * (np.asarray(x, dtype=float) - self.pivot_x)

    def apply(self, x, y):
        return np.asarray(x, dtype=float), np.asarray(y, dtype=float) + self.shift(x)

    def inverse(self):
        return ShearSpec(-self.t, self.pivot_x, self.sign)


def _rect_nodes(grid, rect):
    a, b, c, d = rect
    X, Y = grid.mesh()
    eps = 1e-9 * grid.h
    return (X >= a - eps) & (X <= b + eps) & (Y >= c - eps) & (Y <= d + eps)


def _check_margin(u: ScalarField, s: ShearSpec, rect):
    a, b, c, d = rect
    reach = abs(s.t) * max(abs(b - s.pivot_x), abs(a - s.pivot_x))
    inside = _rect_nodes(u.grid, rect) & (u.values > 0)
    if not inside.any():
        return
    X, Y = u.grid.mesh()
    ys = Y[inside]
    if ys.min() - c <= reach or d - ys.max() <= reach:
        raise MarginError(
            f"support y-range [{ys.min():.6g}, {ys.max():.6g}] is within {reach:.3g} of the window [{c}, {d}]")


def shear_field(u: ScalarField, s: ShearSpec, rect) -> ScalarField:
    """``u o F_t`` inside ``rect = (a, b, c, d)``, ``u`` unchanged outside."""
    _check_margin(u, s, rect)
    if s.t == 0:
        return u
    g = u.grid
    sel = _rect_nodes(g, rect)
    X, Y = g.mesh()
    xs, ys = s.apply(X[sel], Y[sel])
    vals = np.array(u.values)
    vals[sel] = np.maximum(u.sample(xs, ys), 0.0)
    return u.with_values(vals)


def gradient_quotients(u: ScalarField):
    """Cell-centred difference quotients ``(d1 u, d2 u)`` of the bilinear interpolant."""
    a = u.values
    h = u.grid.h
    d1 = 0.5 * ((a[:-1, 1:] - a[:-1, :-1]) + (a[1:, 1:] - a[1:, :-1])) / h
    d2 = 0.5 * ((a[1:, :-1] - a[:-1, :-1]) + (a[1:, 1:] - a[:-1, 1:])) / h
    return d1, d2


@dataclass(frozen=True)
class IncreaseReport:
    lhs: float
    rhs: float
    holds: bool
    algebra_lhs: float
    algebra_rhs: float
    algebra_holds: bool

    @property
    def slack(self):
        return self.rhs - self.lhs


def verify_increase(u: ScalarField, s: ShearSpec, rect) -> IncreaseReport:
    """Check ``|grad u_t|^2 <= (1 + t + t^2) |grad u|^2`` on the grid.

    The resampled check uses :func:`shear_field`. The algebraic check
    composes the difference quotients directly, ``(d1 + t d2)^2 + d2^2``,
    which satisfies the bound exactly for every input.
    """
    t = s.t
    v = shear_field(u, s, rect)
    base = dirichlet_energy(u)
    lhs = dirichlet_energy(v)
    rhs = (1.0 + abs(t) + t * t) * base
    d1, d2 = gradient_quotients(u)
    st = s.sign * t
    alg_l = float(np.sum((d1 + st * d2) ** 2 + d2 ** 2))
    alg_r = (1.0 + abs(t) + t * t) * float(np.sum(d1 ** 2 + d2 ** 2))
    return IncreaseReport(lhs, rhs, lhs <= rhs + 1e-12 * rhs, alg_l, alg_r, alg_l <= alg_r + 1e-12 * alg_r)


# ---------------------------------------------------------------------------
# the mass term under the shear
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IntervalSet:
    """Union of vertical slabs ``[x_lo, x_hi] x (union of [y1, y2])``."""

    slabs: tuple = field(default_factory=tuple)   # ((x_lo, x_hi, ((y1, y2), ...)), ...)

    def __post_init__(self):
        for x_lo, x_hi, ivs in self.slabs:
            if not x_hi > x_lo:
                raise ValueError(f"empty slab [{x_lo}, {x_hi}]")
            prev = -math.inf
            for y1, y2 in ivs:
                if not y2 > y1 or y1 < prev:
                    raise ValueError(f"intervals in slab [{x_lo}, {x_hi}] must be ordered and disjoint")
                prev = y2

    @property
    def empty(self):
        return not any(ivs for _, _, ivs in self.slabs)

    @property
    def bounds(self):
        """``(a, b, c, d)`` of the occupied region."""
        xs = [(lo, hi) for lo, hi, ivs in self.slabs if ivs]
        ys = [iv for _, _, ivs in self.slabs for iv in ivs]
        return (min(x for x, _ in xs), max(x for _, x in xs), min(y for y, _ in ys), max(y for _, y in ys))

    @classmethod
    def from_positivity(cls, s: PositivitySet, mask=None):
        """Each positive node owns the ``h x h`` box centred on it; runs merge per column."""
        g = s.grid
        ind = s.indicator if mask is None else (s.indicator & mask)
        slabs = []
        for i in range(g.nx):
            col = ind[:, i]
            if not col.any():
                continue
            edges = np.diff(np.concatenate([[0], col.astype(np.int8), [0]]))
            starts = np.nonzero(edges == 1)[0]
            ends = np.nonzero(edges == -1)[0] - 1
            x = g.x0 + i * g.h
            ivs = tuple((g.y0 + (j0 - 0.5) * g.h, g.y0 + (j1 + 0.5) * g.h) for j0, j1 in zip(starts, ends))
            slabs.append((x - 0.5 * g.h, x + 0.5 * g.h, ivs))
        return cls(tuple(slabs))


def _as_intervals(omega):
    return IntervalSet.from_positivity(omega) if isinstance(omega, PositivitySet) else omega


def _check_hypotheses(omega: IntervalSet, w: Weight):
    if omega.empty:
        return
    a, _, c, d = omega.bounds
    d_rel = d - w.line_y
    if a <= 0:
        raise HypothesisError(f"the set must lie in x > 0 (a = {a})")
    if c < w.line_y:
        raise HypothesisError("the set must lie on one side of the line (y >= line_y)")
    cap = 1.0 if w.gamma >= 0.5 else 2.0 * w.gamma
    if d_rel > cap * (1 + 1e-12):
        raise HypothesisError(f"height {d_rel} exceeds {cap} for gamma = {w.gamma}")


def set_mass(omega, w: Weight):
    """Exact ``int_Omega Q^2``."""
    omega = _as_intervals(omega)
    total = 0.0
    for x_lo, x_hi, ivs in omega.slabs:
        for y1, y2 in ivs:
            total += (x_hi - x_lo) * float(w.q2_antiderivative(y2) - w.q2_antiderivative(y1))
    return total


def mass_derivative(omega, w: Weight, check=True):
    """``d/dt`` at ``t = 0`` of ``int_{F_{-t}(Omega)} Q^2``, in closed form per slab."""
    omega = _as_intervals(omega)
    if check:
        _check_hypotheses(omega, w)
    total = 0.0
    for x_lo, x_hi, ivs in omega.slabs:
        xm = 0.5 * (x_lo + x_hi)
        for y1, y2 in ivs:
            q2 = float(w(0.0, y2) ** 2 - w(0.0, y1) ** 2)
            total += (x_hi - x_lo) * (-xm) * q2
    return total


def shifted_mass(omega, w: Weight, t, order=12):
    """``int_{F_{-t}(Omega)} Q^2`` with exact ``y``-integrals and Gauss-Legendre in ``x``."""
    omega = _as_intervals(omega)
    nodes, weights = np.polynomial.legendre.leggauss(order)
    total = 0.0
    for x_lo, x_hi, ivs in omega.slabs:
        xs = 0.5 * (x_hi - x_lo) * nodes + 0.5 * (x_hi + x_lo)
        ws = 0.5 * (x_hi - x_lo) * weights
        for y1, y2 in ivs:
            total += float(np.sum(ws * (w.q2_antiderivative(y2 - t * xs) - w.q2_antiderivative(y1 - t * xs))))
    return total


def fd_mass_derivative(omega, w: Weight, dt=1e-5):
    return (shifted_mass(omega, w, dt) - shifted_mass(omega, w, -dt)) / (2.0 * dt)


@dataclass(frozen=True)
class DecreaseReport:
    derivative: float
    bound: float
    holds: bool


def verify_decrease(omega, w: Weight, a=None) -> DecreaseReport:
    """Check ``d/dt int_{F_{-t}(Omega)} Q^2 <= -a int_Omega Q^2`` (``a`` defaults to ``min x``)."""
    omega = _as_intervals(omega)
    if omega.empty:
        return DecreaseReport(0.0, 0.0, True)
    deriv = mass_derivative(omega, w)
    a = omega.bounds[0] if a is None else a
    bound = -a * set_mass(omega, w)
    return DecreaseReport(deriv, bound, deriv <= bound + 1e-12 * abs(bound))


# ---------------------------------------------------------------------------
# the two-sided competitor
# ---------------------------------------------------------------------------


class CompetitorError(ValueError):
    pass


@dataclass(frozen=True)
class CompetitorSpec:
    """Window ``S = [a, b] x [0, c]`` around the component ``component_id``."""

    window: tuple            # (a, b, c)
    component_id: int
    epsilon: float
    t_values: tuple = ()

    def __post_init__(self):
        a, b, c = self.window
        if not (b > a + 1 and c > 0):
            raise ValueError(f"window {self.window} must have b > a + 1 and c > 0")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if any(not t > 0 for t in self.t_values):
            raise ValueError("t values must be positive")

    @property
    def N(self):
        a, b, _ = self.window
        return b - a

    @property
    def rect(self):
        a, b, c = self.window
        return (a, b, 0.0, c)


def _component_geometry(u: ScalarField, spec: CompetitorSpec, w: Weight | None):
    s = positivity_set(u)
    comp = s.component(spec.component_id)
    a, b, c = spec.window
    win = (a, b, 0.0, c)
    sep = component_separation(s, spec.component_id, win)
    if sep < spec.epsilon:
        raise CompetitorError(f"component separation {sep:.4g} is below epsilon = {spec.epsilon}")
    inwin = comp & _rect_nodes(u.grid, win)
    if not inwin.any():
        raise CompetitorError("the component does not meet the window")
    line = 0.0 if w is None else w.line_y
    X, Y = u.grid.mesh()
    # distance from the free boundary of the component (within S) to the line
    eta = float(np.abs(Y[inwin] - line).min())
    return s, comp, inwin, eta


def max_amplitude(u: ScalarField, spec: CompetitorSpec, w: Weight | None = None):
    """Largest admissible ``t``: ``min(eta, epsilon) / (2N)``, further capped by the window margin."""
    _, _, inwin, eta = _component_geometry(u, spec, w)
    eps_prime = min(eta, spec.epsilon)
    _, _, c = spec.window
    Y = u.grid.mesh()[1][inwin]
    room = min(Y.min(), c - Y.max())
    return min(eps_prime / (2.0 * spec.N), room / spec.N)


def _halves(grid, spec: CompetitorSpec):
    a, b, c = spec.window
    mid = 0.5 * (a + b)
    X, Y = grid.mesh()
    inside = (Y >= -1e-12) & (Y <= c + 1e-12)
    left = inside & (X >= a + 0.5) & (X <= mid)
    right = inside & (X > mid) & (X <= b - 0.5)
    return left, right, ShearSpec(0.0, a + 0.5, 1), ShearSpec(0.0, b - 0.5, -1), mid


def _transport(values, grid, sel, spec: ShearSpec):
    X, Y = grid.mesh()
    xs, ys = spec.apply(X[sel], Y[sel])
    fi = (xs - grid.x0) / grid.h
    fj = (ys - grid.y0) / grid.h
    return ndimage.map_coordinates(values, [fj, fi], order=1, mode="constant", cval=0.0)


def build_competitor(u: ScalarField, spec: CompetitorSpec, t, w: Weight | None = None):
    """The two-sided shear competitor ``(v_t, transported positivity set)``.

    On the ``epsilon/2`` neighbourhood of the component, the left half of the
    window is sheared down with pivot ``a + 1/2`` and the right half with
    pivot ``b - 1/2``; everything else is left alone.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    s, comp, _, _ = _component_geometry(u, spec, w)
    if t == 0:
        return u, s
    t_max = max_amplitude(u, spec, w)
    if t > t_max * (1 + 1e-12):
        raise CompetitorError(f"t = {t} exceeds the admissible amplitude {t_max:.6g}")
    g = u.grid
    band = ndimage.distance_transform_edt(~comp) * g.h <= 0.5 * spec.epsilon
    left, right, sl, sr, _ = _halves(g, spec)
    own = np.where(comp, u.values, 0.0)
    ind = comp.astype(float)
    vals = np.array(u.values)
    pos = np.array(s.indicator)
    for half, base in ((left, sl), (right, sr)):
        sel = half & band
        sh = ShearSpec(t, base.pivot_x, base.sign)
        vals[sel] = np.maximum(_transport(own, g, sel, sh), 0.0)
        pos[sel] = _transport(ind, g, sel, sh) >= 0.5
    pos &= vals > 0
    return u.with_values(vals), PositivitySet.from_mask(g, pos)


def energy_gap(u: ScalarField, spec: CompetitorSpec, t, w: Weight):
    """``I(t) - I(0)`` over the window ``S``; negative values certify a better competitor."""
    if t == 0:
        _component_geometry(u, spec, w)
        return 0.0
    v, sv = build_competitor(u, spec, t, w)
    rect = spec.rect
    s0 = positivity_set(u)
    e_t = dirichlet_energy(v, rect) + volume_energy(sv, w, rect)
    e_0 = dirichlet_energy(u, rect) + volume_energy(s0, w, rect)
    return e_t - e_0


def gap_sweep(u: ScalarField, spec: CompetitorSpec, w: Weight, t_values=None):
    """Rows ``(t, gap, admissible)``; amplitudes above the admissible bound get ``gap = nan``."""
    ts = spec.t_values if t_values is None else t_values
    t_max = max_amplitude(u, spec, w)
    rows = []
    for t in ts:
        if t > t_max * (1 + 1e-12):
            rows.append((float(t), math.nan, False))
        else:
            rows.append((float(t), energy_gap(u, spec, t, w), True))
    return rows
