"""Time the numba kernels against their numpy twins.

    python3 benchmarks/bench_kernels.py [--sizes 65,129,257] [--repeat 3]

Each row reports the best wall time of both backends and the speed-up, and
checks that the two produce the same result.
"""
import argparse
import math
import time

import numpy as np

from fbx import kernels


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def sor_case(n):
    rng = np.random.default_rng(n)
    u = np.zeros((n, n))
    u[0, :] = rng.random(n)
    u[-1, :] = rng.random(n)
    free = np.zeros((n, n), dtype=bool)
    free[1:-1, 1:-1] = True
    omega = 2.0 / (1.0 + math.sin(math.pi / (n - 1)))

    def run(kernel):
        v = u.copy()
        kernel(v, free, omega, 1e-9, 40 * n, 8)
        return v

    return run


def label_case(n):
    rng = np.random.default_rng(n)
    mask = np.ascontiguousarray(rng.random((n, n)) < 0.55)
    return lambda kernel: kernel(mask)[0]


def patch_case(n):
    rng = np.random.default_rng(n)
    u = rng.random((n, n))
    free = np.ones((n, n), dtype=bool)
    free[0, :] = free[-1, :] = free[:, 0] = free[:, -1] = False
    fixed = ~free
    centers = [(int(j), int(i)) for j, i in rng.integers(4, n - 4, size=(200, 2))]

    def run(kernel):
        return sum(kernel(u, free, fixed, j, i, 3)[3] for j, i in centers)

    return run


CASES = [
    ("rb_sor", sor_case, kernels._rb_sor_loops, kernels._rb_sor_numpy),
    ("label", label_case, kernels._label_loops, kernels._label_numpy),
    ("patch_resolve x200", patch_case, kernels._patch_resolve_loops, kernels._patch_resolve_numpy),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="65,129,257")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]
    print(f"{'kernel':<20}{'n':>6}{'numba s':>12}{'numpy s':>12}{'speed-up':>10}  agree")
    for name, make, jit_fn, np_fn in CASES:
        for n in sizes:
            run = make(n)
            run(jit_fn)  # compile outside the timing
            t_jit, a = best_of(lambda: run(jit_fn), args.repeat)
            t_np, b = best_of(lambda: run(np_fn), args.repeat)
            agree = np.allclose(a, b, atol=1e-8) if name != "label" else np.array_equal(a, b)
            print(f"{name:<20}{n:>6}{t_jit:>12.4f}{t_np:>12.4f}{t_np / t_jit:>10.1f}  {agree}")


if __name__ == "__main__":
    main()
