"""Hot numeric kernels.

Every kernel exists twice: a loop version compiled with numba and a
vectorised numpy version. The public names at the bottom of the module point
at one or the other depending on ``FBX_DISABLE_NUMBA`` (see ``fbx._jit``).
Both versions are importable under their private names so tests and the
benchmark can compare them directly.

Arrays are indexed ``[j, i]`` (row ``j`` = y, column ``i`` = x). Solvers
assume every perimeter node is fixed.
"""
import numpy as np

from ._jit import USE_NUMBA, njit

# ---------------------------------------------------------------------------
# red-black SOR on a masked 5-point Laplacian
# ---------------------------------------------------------------------------


@njit
def _rb_sor_loops(u, free, omega, tol, max_sweeps, check_every):
    ny, nx = u.shape
    resid = np.inf
    sweeps = 0
    while sweeps < max_sweeps:
        for color in range(2):
            for j in range(1, ny - 1):
                start = 1 + (j + 1 + color) % 2
                for i in range(start, nx - 1, 2):
                    if free[j, i]:
                        nb = u[j - 1, i] + u[j + 1, i] + u[j, i - 1] + u[j, i + 1]
                        u[j, i] += omega * (0.25 * nb - u[j, i])
        sweeps += 1
        if sweeps % check_every == 0 or sweeps == max_sweeps:
            resid = _residual_loops(u, free)
            if resid <= tol:
                break
    return sweeps, resid


@njit
def _residual_loops(u, free):
    ny, nx = u.shape
    r = 0.0
    for j in range(1, ny - 1):
        for i in range(1, nx - 1):
            if free[j, i]:
                d = abs(u[j - 1, i] + u[j + 1, i] + u[j, i - 1] + u[j, i + 1] - 4.0 * u[j, i])
                if d > r:
                    r = d
    return r


def _residual_numpy(u, free):
    nb = u[:-2, 1:-1] + u[2:, 1:-1] + u[1:-1, :-2] + u[1:-1, 2:]
    d = np.abs(nb - 4.0 * u[1:-1, 1:-1])[free[1:-1, 1:-1]]
    return float(d.max()) if d.size else 0.0


def _rb_sor_numpy(u, free, omega, tol, max_sweeps, check_every):
    ny, nx = u.shape
    jj, ii = np.mgrid[1:ny - 1, 1:nx - 1]
    inner_free = free[1:-1, 1:-1]
    # color 0 updates nodes with (i + j) even, matching the loop version
    colors = [inner_free & ((ii + jj) % 2 == 0), inner_free & ((ii + jj) % 2 == 1)]
    inner = u[1:-1, 1:-1]
    resid = np.inf
    sweeps = 0
    while sweeps < max_sweeps:
        for m in colors:
            nb = u[:-2, 1:-1] + u[2:, 1:-1] + u[1:-1, :-2] + u[1:-1, 2:]
            inner[m] += omega * (0.25 * nb[m] - inner[m])
        sweeps += 1
        if sweeps % check_every == 0 or sweeps == max_sweeps:
            resid = _residual_numpy(u, free)
            if resid <= tol:
                break
    return sweeps, resid


# ---------------------------------------------------------------------------
# 4-connected component labelling, labels in row-major seed order
# ---------------------------------------------------------------------------


@njit
def _label_loops(mask):
    ny, nx = mask.shape
    labels = np.zeros((ny, nx), dtype=np.int64)
    stack = np.empty(ny * nx, dtype=np.int64)
    count = 0
    for j0 in range(ny):
        for i0 in range(nx):
            if mask[j0, i0] and labels[j0, i0] == 0:
                count += 1
                labels[j0, i0] = count
                top = 0
                stack[top] = j0 * nx + i0
                top += 1
                while top > 0:
                    top -= 1
                    k = stack[top]
                    j = k // nx
                    i = k - j * nx
                    if j > 0 and mask[j - 1, i] and labels[j - 1, i] == 0:
                        labels[j - 1, i] = count
                        stack[top] = k - nx
                        top += 1
                    if j < ny - 1 and mask[j + 1, i] and labels[j + 1, i] == 0:
                        labels[j + 1, i] = count
                        stack[top] = k + nx
                        top += 1
                    if i > 0 and mask[j, i - 1] and labels[j, i - 1] == 0:
                        labels[j, i - 1] = count
                        stack[top] = k - 1
                        top += 1
                    if i < nx - 1 and mask[j, i + 1] and labels[j, i + 1] == 0:
                        labels[j, i + 1] = count
                        stack[top] = k + 1
                        top += 1
    return labels, count


def _label_numpy(mask):
    """Min-label propagation with pointer jumping; relabels by first node."""
    ny, nx = mask.shape
    big = ny * nx
    lab = np.where(mask, np.arange(big).reshape(ny, nx), big)
    while True:
        new = lab.copy()
        np.minimum(new[1:, :], lab[:-1, :], out=new[1:, :])
        np.minimum(new[:-1, :], lab[1:, :], out=new[:-1, :])
        np.minimum(new[:, 1:], lab[:, :-1], out=new[:, 1:])
        np.minimum(new[:, :-1], lab[:, 1:], out=new[:, :-1])
        new[~mask] = big
        # pointer jumping: follow the current label to that node's label
        flat = new.ravel()
        inside = flat < big
        flat[inside] = flat[flat[inside]]
        if np.array_equal(new, lab):
            break
        lab = new
    out = np.zeros((ny, nx), dtype=np.int64)
    roots = lab[mask]
    if roots.size == 0:
        return out, 0
    uniq, inv = np.unique(roots, return_inverse=True)
    out[mask] = inv + 1
    return out, int(uniq.size)


# ---------------------------------------------------------------------------
# local re-solve around one node (flip move cost)
# ---------------------------------------------------------------------------


@njit
def _cell_energy(a00, a10, a01, a11):
    return 0.5 * ((a10 - a00) ** 2 + (a11 - a01) ** 2 + (a01 - a00) ** 2 + (a11 - a10) ** 2)


@njit
def _patch_resolve_loops(u, free, fixed, jc, ic, r):
    """Re-solve the free nodes of the (2r+1)^2 box around (jc, ic).

    ``free`` is the *new* free mask. Box nodes that are neither free nor
    ``fixed`` are forced to zero; nodes outside the box keep ``u``.
    Returns (j0, i0, box values, Dirichlet-energy change).
    """
    ny, nx = u.shape
    j0 = max(1, jc - r)
    j1 = min(ny - 2, jc + r)
    i0 = max(1, ic - r)
    i1 = min(nx - 2, ic + r)
    pj = j1 - j0 + 1
    pi = i1 - i0 + 1
    idx = -np.ones((pj, pi), dtype=np.int64)
    n = 0
    for j in range(j0, j1 + 1):
        for i in range(i0, i1 + 1):
            if free[j, i]:
                idx[j - j0, i - i0] = n
                n += 1
    box = np.empty((pj, pi))
    for j in range(j0, j1 + 1):
        for i in range(i0, i1 + 1):
            if free[j, i] or fixed[j, i]:
                box[j - j0, i - i0] = u[j, i]
            else:
                box[j - j0, i - i0] = 0.0
    if n > 0:
        a = np.zeros((n, n))
        b = np.zeros(n)
        for j in range(j0, j1 + 1):
            for i in range(i0, i1 + 1):
                k = idx[j - j0, i - i0]
                if k < 0:
                    continue
                a[k, k] = 4.0
                for d in range(4):
                    if d == 0:
                        jn, inn = j - 1, i
                    elif d == 1:
                        jn, inn = j + 1, i
                    elif d == 2:
                        jn, inn = j, i - 1
                    else:
                        jn, inn = j, i + 1
                    if j0 <= jn <= j1 and i0 <= inn <= i1:
                        kn = idx[jn - j0, inn - i0]
                        if kn >= 0:
                            a[k, kn] = -1.0
                        else:
                            b[k] += box[jn - j0, inn - i0]
                    else:
                        b[k] += u[jn, inn]
        x = np.linalg.solve(a, b)
        for j in range(j0, j1 + 1):
            for i in range(i0, i1 + 1):
                k = idx[j - j0, i - i0]
                if k >= 0:
                    box[j - j0, i - i0] = x[k]
    # energy over every cell touching the box
    de = 0.0
    for cj in range(j0 - 1, j1 + 1):
        for ci in range(i0 - 1, i1 + 1):
            o00 = u[cj, ci]
            o10 = u[cj, ci + 1]
            o01 = u[cj + 1, ci]
            o11 = u[cj + 1, ci + 1]
            n00 = box[cj - j0, ci - i0] if (j0 <= cj <= j1 and i0 <= ci <= i1) else o00
            n10 = box[cj - j0, ci + 1 - i0] if (j0 <= cj <= j1 and i0 <= ci + 1 <= i1) else o10
            n01 = box[cj + 1 - j0, ci - i0] if (j0 <= cj + 1 <= j1 and i0 <= ci <= i1) else o01
            n11 = box[cj + 1 - j0, ci + 1 - i0] if (j0 <= cj + 1 <= j1 and i0 <= ci + 1 <= i1) else o11
            de += _cell_energy(n00, n10, n01, n11) - _cell_energy(o00, o10, o01, o11)
    return j0, i0, box, de


def _patch_resolve_numpy(u, free, fixed, jc, ic, r):
    ny, nx = u.shape
    j0, j1 = max(1, jc - r), min(ny - 2, jc + r)
    i0, i1 = max(1, ic - r), min(nx - 2, ic + r)
    sl = (slice(j0, j1 + 1), slice(i0, i1 + 1))
    pfree = free[sl]
    box = np.where(pfree | fixed[sl], u[sl], 0.0)
    n = int(pfree.sum())
    if n:
        idx = -np.ones(pfree.shape, dtype=np.int64)
        idx[pfree] = np.arange(n)
        # pad with the surrounding ring so every neighbour lookup is in range
        ext = u[j0 - 1:j1 + 2, i0 - 1:i1 + 2].copy()
        ext[1:-1, 1:-1] = box
        ext_idx = -np.ones(ext.shape, dtype=np.int64)
        ext_idx[1:-1, 1:-1] = idx
        a = 4.0 * np.eye(n)
        b = np.zeros(n)
        pj, pi = np.nonzero(pfree)
        for dj, di in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            nj, ni = pj + 1 + dj, pi + 1 + di
            kn = ext_idx[nj, ni]
            k = idx[pj, pi]
            inner = kn >= 0
            a[k[inner], kn[inner]] = -1.0
            np.add.at(b, k[~inner], ext[nj[~inner], ni[~inner]])
        box[pfree] = np.linalg.solve(a, b)
    old = u[j0 - 1:j1 + 2, i0 - 1:i1 + 2]
    new = old.copy()
    new[1:-1, 1:-1] = box

    def cells(a):
        return 0.5 * ((a[:-1, 1:] - a[:-1, :-1]) ** 2 + (a[1:, 1:] - a[1:, :-1]) ** 2
                      + (a[1:, :-1] - a[:-1, :-1]) ** 2 + (a[1:, 1:] - a[:-1, 1:]) ** 2)

    return j0, i0, box, float(cells(new).sum() - cells(old).sum())


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

if USE_NUMBA:
    rb_sor = _rb_sor_loops
    laplace_residual = _residual_loops
    label_components = _label_loops
    patch_resolve = _patch_resolve_loops
else:
    rb_sor = _rb_sor_numpy
    laplace_residual = _residual_numpy
    label_components = _label_numpy
    patch_resolve = _patch_resolve_numpy

BACKEND = "numba" if USE_NUMBA else "numpy"
