"""Pure-NumPy fallback for the compiled relaxation kernels.

A lexicographic Gauss-Seidel sweep updates pixel (i, j) with fresh values at
(i-1, j) and (i, j-1) and stale values at (i+1, j) and (i, j+1).  The same
dependency structure holds when pixels are visited anti-diagonal by
anti-diagonal (every 4-neighbor of a pixel on diagonal d = i+j lies on
diagonal d-1 or d+1), so sweeping diagonals in place computes exactly the
values the per-pixel scan would, while NumPy vectorizes within each diagonal.
"""

from __future__ import annotations

import numpy as np


def gs_sweep(u, v, ix, iy, it, lam_s):
    """One in-place lexicographic sweep; returns the mean absolute update."""
    h, w = u.shape
    acc = 0.0
    for d in range(h + w - 1):
        i = np.arange(max(0, d - w + 1), min(h - 1, d) + 1)
        j = d - i
        su = np.zeros(i.shape[0])
        sv = np.zeros(i.shape[0])
        deg = np.zeros(i.shape[0])
        for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            ni = i + di
            nj = j + dj
            m = (ni >= 0) & (ni < h) & (nj >= 0) & (nj < w)
            su[m] += u[ni[m], nj[m]]
            sv[m] += v[ni[m], nj[m]]
            deg[m] += 1.0
        ubar = su / deg
        vbar = sv / deg
        gx = ix[i, j]
        gy = iy[i, j]
        denom = lam_s * deg + gx * gx + gy * gy
        dterm = (gx * ubar + gy * vbar + it[i, j]) / denom
        un = ubar - gx * dterm
        vn = vbar - gy * dterm
        acc += np.abs(un - u[i, j]).sum() + np.abs(vn - v[i, j]).sum()
        u[i, j] = un
        v[i, j] = vn
    return acc / (2.0 * h * w)


def gs_solve(u, v, ix, iy, it, lam_s, max_iters, eps):
    """Sweep until the mean absolute update drops below eps or the cap hits."""
    upd = 0.0
    for k in range(max_iters):
        upd = gs_sweep(u, v, ix, iy, it, lam_s)
        if upd < eps:
            return k + 1, upd
    return max_iters, upd
