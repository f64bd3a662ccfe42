# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled relaxation kernels for the optical-flow solver.

The in-place lexicographic Gauss-Seidel sweep is the hot loop of the whole
pipeline: it cannot be vectorized naively because pixel (i, j) must read the
already-updated values at (i-1, j) and (i, j-1).  Each pixel update is the
exact minimizer of the discrete flow energy over that pixel's (u, v) block,
which is what guarantees monotone energy descent sweep after sweep.

survidx._kernels_py provides a NumPy fallback with identical semantics.
"""

import numpy as np

from libc.math cimport fabs


def gs_sweep(double[:, ::1] u, double[:, ::1] v,
             double[:, ::1] ix, double[:, ::1] iy, double[:, ::1] it,
             double lam_s):
    """One in-place lexicographic sweep; returns the mean absolute update.

    lam_s is the smoothness weight of the discrete energy; the update
    denominator is lam_s*deg + ix^2 + iy^2 where deg counts in-grid
    4-neighbors (4 in the interior).
    """
    cdef Py_ssize_t h = u.shape[0]
    cdef Py_ssize_t w = u.shape[1]
    cdef Py_ssize_t i, j
    cdef double su, sv, deg, ubar, vbar, gx, gy, gt, denom, d, un, vn
    cdef double acc = 0.0
    for i in range(h):
        for j in range(w):
            su = 0.0
            sv = 0.0
            deg = 0.0
            if i > 0:
                su += u[i - 1, j]
                sv += v[i - 1, j]
                deg += 1.0
            if i < h - 1:
                su += u[i + 1, j]
                sv += v[i + 1, j]
                deg += 1.0
            if j > 0:
                su += u[i, j - 1]
                sv += v[i, j - 1]
                deg += 1.0
            if j < w - 1:
                su += u[i, j + 1]
                sv += v[i, j + 1]
                deg += 1.0
            ubar = su / deg
            vbar = sv / deg
            gx = ix[i, j]
            gy = iy[i, j]
            gt = it[i, j]
            denom = lam_s * deg + gx * gx + gy * gy
            d = (gx * ubar + gy * vbar + gt) / denom
            un = ubar - gx * d
            vn = vbar - gy * d
            acc += fabs(un - u[i, j]) + fabs(vn - v[i, j])
            u[i, j] = un
            v[i, j] = vn
    return acc / (2.0 * h * w)


def gs_solve(double[:, ::1] u, double[:, ::1] v,
             double[:, ::1] ix, double[:, ::1] iy, double[:, ::1] it,
             double lam_s, int max_iters, double eps):
    """Sweep until the mean absolute update drops below eps or the cap hits.

    Returns (iterations_used, last_mean_update).
    """
    cdef int k
    cdef double upd = 0.0
    for k in range(max_iters):
        upd = gs_sweep(u, v, ix, iy, it, lam_s)
        if upd < eps:
            return k + 1, upd
    return max_iters, upd
