# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: Hough voting and row-span ellipse counting.

Mirrors ``_reference.py`` operation for operation.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, floor, ceil

cnp.import_array()


def hough_vote(points, centers, double l_first, Py_ssize_t n_radii, phis, ratios):
    cdef double[:, ::1] pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 2)
    cdef double[:, ::1] ctr = np.ascontiguousarray(centers, dtype=np.float64).reshape(-1, 2)
    cdef double[::1] ph = np.ascontiguousarray(phis, dtype=np.float64)
    cdef double[::1] qs = np.ascontiguousarray(ratios, dtype=np.float64)
    cdef Py_ssize_t n_c = ctr.shape[0], n_p = ph.shape[0], n_q = qs.shape[0]
    cdef Py_ssize_t n_e = pts.shape[0]
    out = np.zeros((n_c, n_p, n_q, max(n_radii, 0)), dtype=np.int64)
    if n_e == 0 or n_radii <= 0:
        return out
    cdef cnp.int64_t[:, :, :, ::1] acc = out
    cdef double[::1] cos_p = np.cos(np.asarray(ph))
    cdef double[::1] sin_p = np.sin(np.asarray(ph))
    cdef Py_ssize_t ci, pi, qi, ei, k
    cdef double dx, dy, a, b, bq, q, r_eq, kf

    for ci in range(n_c):
        for ei in range(n_e):
            dx = pts[ei, 0] - ctr[ci, 0]
            dy = pts[ei, 1] - ctr[ci, 1]
            for pi in range(n_p):
                a = dx * cos_p[pi] + dy * sin_p[pi]
                b = dy * cos_p[pi] - dx * sin_p[pi]
                for qi in range(n_q):
                    q = qs[qi]
                    if q == 1.0 and pi != 0:
                        continue
                    bq = b / q
                    r_eq = sqrt(a * a + bq * bq)
                    kf = floor(r_eq - l_first + 0.5)
                    if kf >= 0 and kf < n_radii:
                        k = <Py_ssize_t>kf
                        acc[ci, pi, qi, k] += 1
    return out


def ellipse_counts(prefix, ellipses):
    cdef cnp.int64_t[:, ::1] pre = np.ascontiguousarray(prefix, dtype=np.int64)
    cdef double[:, ::1] ell = np.ascontiguousarray(ellipses, dtype=np.float64).reshape(-1, 5)
    cdef Py_ssize_t h = pre.shape[0], w = pre.shape[1] - 1
    cdef Py_ssize_t n = ell.shape[0]
    out = np.zeros(n, dtype=np.int64)
    if n == 0 or h == 0 or w <= 0:
        return out
    cdef cnp.int64_t[::1] res = out
    cdef double[::1] cos_e = np.cos(np.asarray(ell[:, 4]))
    cdef double[::1] sin_e = np.sin(np.asarray(ell[:, 4]))
    cdef Py_ssize_t i, y, y0, y1, lo_i, hi_i
    cdef double cx, cy, big, small, c, s, inv_big2, inv_small2, a2, b2, c2
    cdef double dy, disc, sq, x_lo, x_hi, lo, hi, half_h
    cdef cnp.int64_t total

    for i in range(n):
        cx = ell[i, 0]
        cy = ell[i, 1]
        big = ell[i, 2]
        small = ell[i, 3]
        if not (big > 0 and small > 0):
            continue
        c = cos_e[i]
        s = sin_e[i]
        inv_big2 = 1.0 / (big * big)
        inv_small2 = 1.0 / (small * small)
        a2 = c * c * inv_big2 + s * s * inv_small2
        # rows outside [y0, y1] have a negative discriminant; the margin keeps
        # the decision identical to the row-by-row test in the reference
        half_h = sqrt(big * big * s * s + small * small * c * c)
        y0 = <Py_ssize_t>floor(cy - half_h) - 1
        y1 = <Py_ssize_t>ceil(cy + half_h) + 1
        if y0 < 0:
            y0 = 0
        if y1 > h - 1:
            y1 = h - 1
        total = 0
        for y in range(y0, y1 + 1):
            dy = <double>y - cy
            b2 = 2.0 * dy * c * s * (inv_big2 - inv_small2)
            c2 = dy * dy * (s * s * inv_big2 + c * c * inv_small2) - 1.0
            disc = b2 * b2 - 4.0 * a2 * c2
            if disc < 0.0:
                continue
            sq = sqrt(disc)
            x_lo = cx + (-b2 - sq) / (2.0 * a2)
            x_hi = cx + (-b2 + sq) / (2.0 * a2)
            lo = ceil(x_lo)
            if lo < 0.0:
                lo = 0.0
            hi = floor(x_hi)
            if hi > w - 1.0:
                hi = w - 1.0
            if hi < lo:
                continue
            lo_i = <Py_ssize_t>lo
            hi_i = <Py_ssize_t>hi + 1
            total += pre[y, hi_i] - pre[y, lo_i]
        res[i] = total
    return out
