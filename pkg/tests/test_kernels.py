"""The jitted loop kernels and their numpy twins must agree."""
import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fbx import kernels


def _problem(seed, n=17):
    rng = np.random.default_rng(seed)
    u = np.zeros((n, n))
    u[0, :], u[-1, :], u[:, 0], u[:, -1] = rng.random(n), rng.random(n), rng.random(n), rng.random(n)
    free = np.zeros((n, n), dtype=bool)
    free[1:-1, 1:-1] = rng.random((n - 2, n - 2)) < 0.8
    return u, free


@pytest.mark.parametrize("seed", range(5))
def test_sor_twins_agree(seed):
    u, free = _problem(seed)
    omega = 2.0 / (1.0 + math.sin(math.pi / 16))
    a, b = u.copy(), u.copy()
    sa = kernels._rb_sor_loops(a, free, omega, 1e-12, 5000, 8)
    sb = kernels._rb_sor_numpy(b, free, omega, 1e-12, 5000, 8)
    assert sa[0] == sb[0]
    assert np.allclose(a, b, atol=1e-13)
    assert kernels._residual_loops(a, free) == pytest.approx(kernels._residual_numpy(a, free), abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(3, 20), st.integers(3, 20), st.floats(0.1, 0.9))
def test_label_twins_agree(seed, ny, nx, p):
    mask = np.ascontiguousarray(np.random.default_rng(seed).random((ny, nx)) < p)
    la, ca = kernels._label_loops(mask)
    lb, cb = kernels._label_numpy(mask)
    assert ca == cb
    assert np.array_equal(la, lb)


@pytest.mark.parametrize("seed,jc,ic,r", [(0, 5, 5, 2), (1, 1, 1, 3), (2, 15, 8, 3), (3, 8, 15, 1)])
def test_patch_twins_agree(seed, jc, ic, r):
    rng = np.random.default_rng(seed)
    u = rng.random((17, 17))
    free = rng.random((17, 17)) < 0.6
    fixed = np.zeros_like(free)
    fixed[0, :] = fixed[-1, :] = fixed[:, 0] = fixed[:, -1] = True
    free &= ~fixed
    ra = kernels._patch_resolve_loops(u, free, fixed, jc, ic, r)
    rb = kernels._patch_resolve_numpy(u, free, fixed, jc, ic, r)
    assert ra[:2] == rb[:2]
    assert np.allclose(ra[2], rb[2], atol=1e-12)
    assert ra[3] == pytest.approx(rb[3], abs=1e-12)


def test_patch_full_box_equals_global_solve():
    u, free = _problem(7, n=9)
    fixed = np.zeros_like(free)
    fixed[0, :] = fixed[-1, :] = fixed[:, 0] = fixed[:, -1] = True
    j0, i0, box, _ = kernels.patch_resolve(u, free, fixed, 4, 4, 10)
    v = np.where(free | fixed, u, 0.0)
    kernels.rb_sor(v, free, 1.5, 1e-13, 10_000, 4)
    assert np.allclose(box, v[1:-1, 1:-1], atol=1e-11)


def test_numpy_fallback_selected_by_env_flag():
    code = ("from fbx import kernels, BACKEND; from fbx.solver import flip_sweep;"
            "print(BACKEND, kernels.rb_sor.__name__, flip_sweep.__name__)")
    env = dict(os.environ, FBX_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["numpy", "_rb_sor_numpy", "_flip_sweep_python"]


def test_solver_results_identical_across_backends():
    code = """
import numpy as np
from fbx.grid import Grid, ScalarField, Weight
from fbx.solver import SolveConfig, local_minimize
g = Grid.covering(0, 1, 0, 1, 1 / 16)
X, Y = g.mesh()
b = ScalarField(g, np.where(g.perimeter(), np.maximum(0, np.sin(np.pi * X)) * (Y == 1), 0))
r = local_minimize(b, Weight(0.5, 0.0), SolveConfig(patch_radius=2))
print(repr(r.energy.total), int(r.pattern.indicator.sum()), r.flip_stable)
"""
    outs = []
    for flag in ("0", "1"):
        env = dict(os.environ, FBX_DISABLE_NUMBA=flag)
        outs.append(subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                                   check=True).stdout.split())
    assert outs[0][1:] == outs[1][1:]
    assert float(outs[0][0]) == pytest.approx(float(outs[1][0]), rel=1e-9)
