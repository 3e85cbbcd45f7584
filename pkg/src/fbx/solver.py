"""Discrete local minimizers of ``J_Q``.

A minimizer is searched over node patterns: for a fixed pattern the field is
the discrete harmonic extension of the Dirichlet data (zero off the pattern),
and patterns are improved one node flip at a time until no single flip lowers
the energy.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from . import kernels
from .energy import EnergyReport, dirichlet_energy, improvement_tol, pattern_energy, total_energy
from .grid import PositivitySet, ScalarField, Weight, node_masses, positivity_set

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


class TooManyFreeNodes(ValueError):
    pass


@dataclass(frozen=True)
class SolveConfig:
    cg_tol: float = 1e-10
    max_outer: int = 10_000
    flip_order: str = "row-major"
    init: str = "truncated_harmonic"
    pattern: np.ndarray | None = field(default=None, compare=False)
    # None: exact deltas from a full re-solve, one flip per outer iteration.
    # int r: deltas from a (2r+1)^2 local re-solve, one sweep per outer iteration.
    patch_radius: int | None = None

    def __post_init__(self):
        if not self.cg_tol > 0:
            raise ValueError("cg_tol must be > 0")
        if self.max_outer < 1:
            raise ValueError("max_outer must be >= 1")
        if self.flip_order != "row-major":
            raise ValueError(f"unsupported flip order {self.flip_order!r}")
        if self.init not in ("truncated_harmonic", "given_pattern"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.init == "given_pattern" and self.pattern is None:
            raise ValueError("init='given_pattern' needs a pattern")


@dataclass(frozen=True, eq=False)
class SolveResult:
    field: ScalarField
    pattern: PositivitySet
    energy: EnergyReport
    outer_iters: int
    flip_stable: bool
    history: tuple = ()
    flips: int = 0


def _sor_omega(shape):
    n = max(shape)
    return 2.0 / (1.0 + math.sin(math.pi / (n - 1)))


def _live_free(free, fixed_vals, fixed):
    """Drop free components that touch no positive Dirichlet node."""
    if not free.any():
        return free
    labels, count = kernels.label_components(np.ascontiguousarray(free))
    labels = np.asarray(labels)
    pos = fixed & (fixed_vals > 0)
    touch = np.zeros_like(free)
    touch[1:, :] |= pos[:-1, :]
    touch[:-1, :] |= pos[1:, :]
    touch[:, 1:] |= pos[:, :-1]
    touch[:, :-1] |= pos[:, 1:]
    live = np.zeros(count + 1, dtype=bool)
    live[np.unique(labels[touch & free])] = True
    live[0] = False
    return live[labels]


def _assemble(free):
    """5-point Laplacian restricted to ``free`` nodes (rows in row-major order)."""
    ny, nx = free.shape
    idx = -np.ones(free.shape, dtype=np.int64)
    fj, fi = np.nonzero(free)
    n = fj.size
    idx[fj, fi] = np.arange(n)
    rows, cols = [np.arange(n)], [np.arange(n)]
    vals = [np.full(n, 4.0)]
    for dj, di in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        k = idx[fj + dj, fi + di]
        ok = k >= 0
        rows.append(np.arange(n)[ok])
        cols.append(k[ok])
        vals.append(-np.ones(ok.sum()))
    a = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return a, idx, fj, fi


def _rhs(u, free, fj, fi):
    b = np.zeros(fj.size)
    for dj, di in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        nb_free = free[fj + dj, fi + di]
        b += np.where(nb_free, 0.0, u[fj + dj, fi + di])
    return b


def harmonic_solve(pattern, boundary: ScalarField, tol=1e-10, max_sweeps=None, method="sor"):
    """Discrete harmonic extension of the Dirichlet data onto ``pattern``.

    Parameters
    ----------
    pattern : PositivitySet or bool array
        Nodes allowed to be positive. Dirichlet nodes keep their data anyway.
    boundary : ScalarField
        Dirichlet values on ``boundary.boundary_mask``; values on free nodes
        are used as the starting guess.
    tol : float
        Bound on ``max |sum(neighbours) - 4 u|`` over free nodes.
    method : {"sor", "cg", "direct"}
        ``"sor"`` runs red-black SOR and falls back to conjugate gradients if
        the sweep cap is hit.

    Components of the pattern that do not touch positive Dirichlet data are
    set to exactly zero.
    """
    mask = pattern.indicator if isinstance(pattern, PositivitySet) else np.asarray(pattern, dtype=bool)
    fixed = boundary.boundary_mask
    bvals = boundary.values
    if np.any(bvals[fixed] < 0):
        raise ValueError("boundary values must be nonnegative")
    free = _live_free(mask & ~fixed, bvals, fixed)
    u = np.where(fixed, bvals, np.where(free, bvals, 0.0))
    u = np.ascontiguousarray(u, dtype=float)
    if free.any():
        if method == "sor":
            cap = max_sweeps if max_sweeps is not None else 60 * max(u.shape) + 200
            sweeps, resid = kernels.rb_sor(u, np.ascontiguousarray(free), _sor_omega(u.shape), tol, cap, 8)
            if not resid <= tol:
                log.info("SOR stalled at residual %.3e after %d sweeps; switching to CG", resid, sweeps)
                method = "cg"
        if method in ("cg", "direct"):
            a, idx, fj, fi = _assemble(free)
            b = _rhs(u, free, fj, fi)
            if method == "direct":
                x = spla.spsolve(a.tocsc(), b)
            else:
                x, info = spla.cg(a, b, x0=u[fj, fi], rtol=0.0, atol=tol / 4.0, maxiter=20 * fj.size + 100)
                if info != 0:
                    raise SolverError(f"harmonic solve did not converge (CG info={info})")
            u[fj, fi] = x
        resid = kernels.laplace_residual(u, np.ascontiguousarray(free))
        if method == "direct" and resid > tol:
            log.debug("direct solve residual %.3e above tol", resid)
        elif resid > tol * 1.000001:
            raise SolverError(f"harmonic solve residual {resid:.3e} exceeds tol {tol:.3e}")
    if u.min() < -max(tol, 1e-14):
        raise SolverError("negative values at convergence: pattern inconsistent with data")
    np.maximum(u, 0.0, out=u)
    return ScalarField(boundary.grid, u, boundary.boundary_mask)


# ---------------------------------------------------------------------------
# flip search
# ---------------------------------------------------------------------------


def _has_positive_neighbour(vals, j, i):
    return vals[j - 1, i] > 0 or vals[j + 1, i] > 0 or vals[j, i - 1] > 0 or vals[j, i + 1] > 0


def _flip_sweep_python(u, pat, fixed, m, r, tol):
    ny, nx = u.shape
    accepted = 0
    gain = 0.0
    for j in range(1, ny - 1):
        for i in range(1, nx - 1):
            if fixed[j, i]:
                continue
            was_in = pat[j, i]
            if not was_in and not _has_positive_neighbour(u, j, i):
                continue
            pat[j, i] = not was_in
            j0, i0, box, dd = kernels.patch_resolve(u, pat, fixed, j, i, r)
            delta = dd + (-m[j, i] if was_in else m[j, i])
            if delta < -tol:
                u[j0:j0 + box.shape[0], i0:i0 + box.shape[1]] = np.maximum(box, 0.0)
                accepted += 1
                gain += delta
            else:
                pat[j, i] = was_in
    return accepted, gain


if kernels.USE_NUMBA:
    from ._jit import njit

    @njit
    def _flip_sweep_loops(u, pat, fixed, m, r, tol):
        ny, nx = u.shape
        accepted = 0
        gain = 0.0
        for j in range(1, ny - 1):
            for i in range(1, nx - 1):
                if fixed[j, i]:
                    continue
                was_in = pat[j, i]
                if not was_in:
                    if not (u[j - 1, i] > 0 or u[j + 1, i] > 0 or u[j, i - 1] > 0 or u[j, i + 1] > 0):
                        continue
                pat[j, i] = not was_in
                j0, i0, box, dd = kernels._patch_resolve_loops(u, pat, fixed, j, i, r)
                delta = dd + (-m[j, i] if was_in else m[j, i])
                if delta < -tol:
                    for bj in range(box.shape[0]):
                        for bi in range(box.shape[1]):
                            u[j0 + bj, i0 + bi] = max(box[bj, bi], 0.0)
                    accepted += 1
                    gain += delta
                else:
                    pat[j, i] = was_in
        return accepted, gain

    flip_sweep = _flip_sweep_loops
else:
    flip_sweep = _flip_sweep_python


def _initial_pattern(boundary, cfg):
    free = ~boundary.boundary_mask
    if cfg.init == "given_pattern":
        return np.asarray(cfg.pattern, dtype=bool) & free
    full = harmonic_solve(np.ones(boundary.grid.shape, dtype=bool), boundary, tol=cfg.cg_tol)
    return (full.values > 0) & free


def local_minimize(boundary: ScalarField, w: Weight, cfg: SolveConfig = SolveConfig()) -> SolveResult:
    """Descend over node patterns until no single flip strictly lowers ``J_Q``.

    With ``cfg.patch_radius=None`` each outer iteration scans nodes in
    row-major order with exact (full re-solve) deltas and applies the first
    improving flip. With an integer radius each outer iteration is one
    row-major sweep applying every improving flip found with local re-solves,
    followed by a global re-solve. Either way the recorded energies never
    increase, and ``flip_stable`` is only reported after a scan of a freshly
    solved field that found nothing to improve.
    """
    grid = boundary.grid
    fixed = np.ascontiguousarray(boundary.boundary_mask)
    pat = _initial_pattern(boundary, cfg)
    u = harmonic_solve(pat, boundary, tol=cfg.cg_tol)
    pat = (u.values > 0) & ~fixed
    energy = total_energy(u, w)
    history = [energy.total]
    m = node_masses(grid, w)
    flips = 0
    stable = False
    outer = 0
    while outer < cfg.max_outer:
        outer += 1
        tol = improvement_tol(energy.total)
        if cfg.patch_radius is None:
            moved = False
            for j in range(1, grid.ny - 1):
                for i in range(1, grid.nx - 1):
                    if fixed[j, i]:
                        continue
                    if not pat[j, i] and not _has_positive_neighbour(u.values, j, i):
                        continue
                    trial = pat.copy()
                    trial[j, i] = not pat[j, i]
                    v = harmonic_solve(trial, u, tol=cfg.cg_tol)
                    e_new = pattern_energy(v, trial, w).total
                    if e_new - energy.total < -tol:
                        pat = trial & (v.values > 0)
                        u = v
                        moved = True
                        flips += 1
                        break
                if moved:
                    break
            if not moved:
                stable = True
                break
        else:
            vals = np.array(u.values)
            accepted, _ = flip_sweep(vals, pat, fixed, m, int(cfg.patch_radius), tol)
            if accepted == 0:
                stable = True
                break
            flips += accepted
            u = harmonic_solve(pat, u.with_values(vals), tol=cfg.cg_tol)
            pat = (u.values > 0) & ~fixed
        new_energy = total_energy(u, w)
        if new_energy.total > energy.total + improvement_tol(energy.total):
            raise SolverError("energy increased during flip search")
        energy = new_energy
        history.append(energy.total)
    else:
        log.warning("flip search hit max_outer=%d before becoming stable", cfg.max_outer)
    return SolveResult(u, positivity_set(u), energy, outer, stable, tuple(history), flips)


# ---------------------------------------------------------------------------
# exhaustive oracle for tiny grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class OracleResult:
    free_nodes: np.ndarray          # (k, 2) rows of (i, j), row-major
    energies: np.ndarray            # total energy per pattern code
    global_min: EnergyReport
    global_min_code: int
    stable_codes: np.ndarray

    @property
    def n_patterns(self):
        return self.energies.size

    def code_of(self, mask):
        """Integer code of a node mask: bit q set iff free node q is in the mask."""
        i, j = self.free_nodes[:, 0], self.free_nodes[:, 1]
        bits = np.asarray(mask, dtype=bool)[j, i]
        return int(np.sum(bits.astype(np.int64) << np.arange(bits.size, dtype=np.int64)))

    def mask_of(self, code, shape):
        out = np.zeros(shape, dtype=bool)
        for q, (i, j) in enumerate(self.free_nodes):
            if code >> q & 1:
                out[j, i] = True
        return out

    def stable_patterns(self, shape):
        return [self.mask_of(int(c), shape) for c in self.stable_codes]


def _edge_list(grid):
    """Node-index pairs and weights of the Dirichlet quadratic form."""
    ny, nx = grid.shape
    idx = np.arange(ny * nx).reshape(ny, nx)
    a = [idx[:, :-1].ravel(), idx[:-1, :].ravel()]
    b = [idx[:, 1:].ravel(), idx[1:, :].ravel()]
    wh = np.ones((ny, nx - 1))
    wh[0, :] = wh[-1, :] = 0.5
    wv = np.ones((ny - 1, nx))
    wv[:, 0] = wv[:, -1] = 0.5
    return np.concatenate(a), np.concatenate(b), np.concatenate([wh.ravel(), wv.ravel()])


def brute_force_oracle(boundary: ScalarField, w: Weight, max_free=20, chunk=4096) -> OracleResult:
    """Enumerate every pattern of the free nodes and solve each one densely."""
    grid = boundary.grid
    fixed = boundary.boundary_mask
    fj, fi = np.nonzero(~fixed)
    k = fj.size
    if k > max_free:
        raise TooManyFreeNodes(f"{k} free nodes exceeds the oracle limit of {max_free}")
    ny, nx = grid.shape
    pos = {(j, i): q for q, (j, i) in enumerate(zip(fj, fi))}
    lap = 4.0 * np.eye(k)
    base_rhs = np.zeros(k)
    for q, (j, i) in enumerate(zip(fj, fi)):
        for dj, di in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            nb = (j + dj, i + di)
            if nb in pos:
                lap[q, pos[nb]] = -1.0
            else:
                base_rhs[q] += boundary.values[nb]
    ea, eb, ew = _edge_list(grid)
    nm = node_masses(grid, w)
    fixed_mass = float(nm[fixed & (boundary.values > 0)].sum())
    free_mass = nm[fj, fi]
    flat_fixed = np.where(fixed, boundary.values, 0.0).ravel()
    flat_free = fj * nx + fi

    n_pat = 1 << k
    energies = np.empty(n_pat)
    dir_all = np.empty(n_pat)
    shifts = np.arange(k, dtype=np.int64)
    for start in range(0, n_pat, chunk):
        codes = np.arange(start, min(start + chunk, n_pat), dtype=np.int64)
        bits = ((codes[:, None] >> shifts[None, :]) & 1).astype(bool)
        on = bits[:, :, None] & bits[:, None, :]
        mats = np.where(on, lap[None], 0.0)
        diag = np.arange(k)
        mats[:, diag, diag] = np.where(bits, 4.0, 1.0)
        # pattern rows only see pattern neighbours; off-pattern free nodes are 0
        rhs = np.where(bits, base_rhs[None, :], 0.0)
        x = np.linalg.solve(mats, rhs[..., None])[..., 0]
        full = np.repeat(flat_fixed[None, :], codes.size, axis=0)
        full[:, flat_free] = x
        d = ((full[:, ea] - full[:, eb]) ** 2 * ew).sum(axis=1)
        dir_all[codes] = d
        energies[codes] = d + fixed_mass + bits @ free_mass
    codes = np.arange(n_pat, dtype=np.int64)
    tol = 1e-11 * (np.abs(energies) + 1e-12)
    stable = np.ones(n_pat, dtype=bool)
    for q in range(k):
        stable &= energies[codes ^ (1 << q)] - energies >= -tol
    best = int(np.argmin(energies))
    rep = EnergyReport.of(dir_all[best], energies[best] - dir_all[best])
    return OracleResult(np.column_stack([fi, fj]), energies, rep, best, codes[stable])
