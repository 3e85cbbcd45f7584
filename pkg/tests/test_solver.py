import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fbx.energy import pattern_energy, total_energy
from fbx.grid import Grid, ScalarField, Weight
from fbx.solver import (SolveConfig, TooManyFreeNodes, brute_force_oracle, flip_sweep, harmonic_solve,
                        local_minimize)
from fbx.experiments import strip_field


def test_config_validation():
    with pytest.raises(ValueError):
        SolveConfig(cg_tol=0)
    with pytest.raises(ValueError):
        SolveConfig(max_outer=0)
    with pytest.raises(ValueError):
        SolveConfig(init="given_pattern")
    with pytest.raises(ValueError):
        SolveConfig(flip_order="random")


def test_harmonic_empty_and_linear():
    g = Grid.covering(0, 1, 0, 1, 1 / 16)
    b = ScalarField.from_function(g, lambda X, Y: Y)
    assert not harmonic_solve(np.zeros(g.shape, bool), b).values[1:-1, 1:-1].any()
    full = harmonic_solve(np.ones(g.shape, bool), ScalarField(g, np.where(g.perimeter(), b.values, 0)))
    assert np.allclose(full.values, b.values, atol=1e-9)


def _dense_solve(pattern, bvals, fixed):
    ny, nx = pattern.shape
    free = pattern & ~fixed
    idx = {p: k for k, p in enumerate(zip(*np.nonzero(free)))}
    A = np.zeros((len(idx), len(idx)))
    rhs = np.zeros(len(idx))
    for (j, i), k in idx.items():
        A[k, k] = 4
        for dj, di in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            q = (j + dj, i + di)
            if q in idx:
                A[k, idx[q]] = -1
            elif fixed[q]:
                rhs[k] += bvals[q]
    x = np.linalg.solve(A, rhs)
    out = np.where(fixed, bvals, 0.0)
    for (j, i), k in idx.items():
        out[j, i] = x[k]
    return out


@pytest.mark.parametrize("method", ["sor", "cg", "direct"])
def test_l_shaped_pattern_matches_dense_solve(method):
    g = Grid.covering(0, 1, 0, 1, 1 / 12)
    X, Y = g.mesh()
    bvals = np.where(g.perimeter() & (X == 0), 1.0, 0.0)
    pat = np.zeros(g.shape, bool)
    pat[1:12, 1:6] = True
    pat[1:6, 1:12] = True
    u = harmonic_solve(pat, ScalarField(g, bvals), tol=1e-12, method=method)
    assert np.abs(u.values - _dense_solve(pat, bvals, g.perimeter())).max() <= 1e-8


def test_dead_components_are_zeroed():
    g = Grid(9, 9, 0.125)
    bvals = np.zeros(g.shape)
    bvals[0, 1:4] = 1.0
    pat = np.zeros(g.shape, bool)
    pat[1:3, 1:4] = True           # touches the positive data
    pat[5:8, 5:8] = True           # isolated island
    u = harmonic_solve(pat, ScalarField(g, bvals))
    assert (u.values[1:3, 1:4] > 0).all()
    assert (u.values[5:8, 5:8] == 0).all()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_maximum_principle(seed):
    rng = np.random.default_rng(seed)
    g = Grid(12, 10, 0.1)
    bvals = np.where(g.perimeter(), rng.random(g.shape) * 3, 0.0)
    pat = rng.random(g.shape) < 0.7
    u = harmonic_solve(pat, ScalarField(g, bvals))
    assert u.values.min() >= 0
    assert u.values.max() <= bvals.max() + 1e-12
    assert (u.values[u.boundary_mask] == bvals[u.boundary_mask]).all()


def test_zero_boundary_gives_zero_minimizer():
    g = Grid.covering(0, 1, 0, 1, 1 / 8)
    r = local_minimize(ScalarField.zeros(g), Weight(0.5))
    assert r.flip_stable and r.energy.total == 0 and not r.field.values.any()


def _bump(n, seed=None):
    g = Grid(n, n, 1.0 / (n - 1), 0.0, -0.3)
    X, Y = g.mesh()
    if seed is None:
        vals = np.where(g.perimeter() & (Y > 0.6), np.sin(np.pi * X) * 0.6, 0.0)
    else:
        vals = np.where(g.perimeter(), np.random.default_rng(seed).random(g.shape) * 0.8, 0.0)
    return ScalarField(g, vals)


@pytest.mark.parametrize("n", [5, 6])
def test_minimizer_is_in_oracle_stable_set(n):
    b = _bump(n)
    w = Weight(0.5)
    orc = brute_force_oracle(b, w)
    for radius in (None, 2):
        r = local_minimize(b, w, SolveConfig(cg_tol=1e-12, patch_radius=radius))
        assert r.flip_stable
        code = orc.code_of(r.pattern.indicator)
        assert code in set(orc.stable_codes.tolist())
        assert r.energy.total >= orc.global_min.total - 1e-12
        assert r.energy.total == pytest.approx(orc.energies[code], rel=1e-8)


def test_oracle_examples():
    g = Grid(4, 4, 1 / 3)
    w = Weight(0.5)
    zero = brute_force_oracle(ScalarField.zeros(g), w)
    assert zero.n_patterns == 16 and zero.global_min_code == 0 and zero.global_min.total == 0
    assert zero.mask_of(5, g.shape).sum() == 2
    with pytest.raises(TooManyFreeNodes):
        brute_force_oracle(ScalarField.zeros(Grid(7, 7, 0.1)), w)


def test_oracle_energies_match_harmonic_solves():
    b = _bump(5, seed=4)
    w = Weight(0.75, 0.1)
    orc = brute_force_oracle(b, w)
    for code in (0, 1, 77, 300, 511):
        mask = orc.mask_of(code, b.grid.shape)
        u = harmonic_solve(mask, b, tol=1e-13, method="direct")
        assert orc.energies[code] == pytest.approx(pattern_energy(u, mask | b.boundary_mask & (b.values > 0), w).total,
                                                   rel=1e-10)


def test_history_non_increasing_and_deterministic():
    b = _bump(17)
    w = Weight(0.5)
    r1 = local_minimize(b, w, SolveConfig(patch_radius=3))
    r2 = local_minimize(b, w, SolveConfig(patch_radius=3))
    assert all(b2 <= a2 + 1e-12 for a2, b2 in zip(r1.history, r1.history[1:]))
    assert np.array_equal(r1.field.values, r2.field.values) and r1.history == r2.history


def test_exact_and_patch_modes_agree_on_small_grid():
    b = _bump(9)
    w = Weight(0.5)
    exact = local_minimize(b, w, SolveConfig(cg_tol=1e-12))
    patch = local_minimize(b, w, SolveConfig(cg_tol=1e-12, patch_radius=3))
    assert exact.flip_stable and patch.flip_stable
    assert exact.energy.total == pytest.approx(patch.energy.total, rel=1e-9)


def test_max_outer_cap_reports_unstable():
    b = _bump(17)
    r = local_minimize(b, Weight(0.5), SolveConfig(max_outer=1))
    assert r.outer_iters == 1 and not r.flip_stable


def test_flip_sweep_accepts_only_improvements():
    b = _bump(9)
    w = Weight(0.5)
    from fbx.grid import node_masses
    u = harmonic_solve(np.ones(b.grid.shape, bool), b)
    vals = np.array(u.values)
    pat = (vals > 0) & ~b.boundary_mask
    before = total_energy(u, w).total
    accepted, gain = flip_sweep(vals, pat, np.ascontiguousarray(b.boundary_mask), node_masses(b.grid, w), 3, 1e-14)
    assert gain <= 0
    after = total_energy(harmonic_solve(pat, u.with_values(vals)), w).total
    assert after <= before + 1e-12


def test_strip_pattern_sags():
    g = Grid.covering(0, 16, 0, 3, 1 / 8)
    u = ScalarField(g, strip_field(g))
    pat = u.values > 0
    w = Weight(0.5)
    r = local_minimize(u, w, SolveConfig(init="given_pattern", pattern=pat, patch_radius=3))
    assert r.energy.total < total_energy(u, w).total
    assert not np.array_equal(r.pattern.indicator, pat)
