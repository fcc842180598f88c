"""Pure numpy versions of the hot kernels.

These are the fallback when the compiled extension is unavailable and the
reference the compiled versions are tested against. Arithmetic is written in
the same order as ``_fast.pyx`` so both backends agree bit for bit.
"""

import numpy as np


def hough_vote(points, centers, l_first, n_radii, phis, ratios):
    """Accumulate ellipse votes over (center, orientation, axis ratio, radius).

    Each edge point votes once per (center, orientation, ratio) bin for the
    major radius it would have on an ellipse with that center/orientation/ratio.
    A ratio of exactly 1 is a circle, so only orientation bin 0 is voted.
    Returns an int64 array of shape (n_centers, n_phis, n_ratios, n_radii).
    """
    points = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 2)
    centers = np.ascontiguousarray(centers, dtype=np.float64).reshape(-1, 2)
    phis = np.asarray(phis, dtype=np.float64)
    ratios = np.asarray(ratios, dtype=np.float64)
    n_c, n_p, n_q = len(centers), len(phis), len(ratios)
    acc = np.zeros((n_c, n_p, n_q, n_radii), dtype=np.int64)
    if len(points) == 0 or n_radii <= 0:
        return acc

    cos_p = np.cos(phis)
    sin_p = np.sin(phis)
    for ci in range(n_c):
        dx = points[:, 0] - centers[ci, 0]
        dy = points[:, 1] - centers[ci, 1]
        for pi in range(n_p):
            a = dx * cos_p[pi] + dy * sin_p[pi]
            b = dy * cos_p[pi] - dx * sin_p[pi]
            for qi in range(n_q):
                q = ratios[qi]
                if q == 1.0 and pi != 0:
                    continue
                bq = b / q
                r_eq = np.sqrt(a * a + bq * bq)
                k = np.floor(r_eq - l_first + 0.5)
                ok = (k >= 0) & (k < n_radii)
                if np.any(ok):
                    acc[ci, pi, qi] += np.bincount(
                        k[ok].astype(np.int64), minlength=n_radii
                    )
    return acc


def ellipse_counts(prefix, ellipses):
    """Count mask pixels whose centers fall inside each ellipse.

    ``prefix`` is a row-wise cumulative sum of a mask with a leading zero
    column, shape (H, W + 1). ``ellipses`` rows are (cx, cy, r_major, r_minor,
    phi) in pixel units; pixel (row i, col j) has its center at (x=j, y=i).
    """
    prefix = np.asarray(prefix)
    ell = np.ascontiguousarray(ellipses, dtype=np.float64).reshape(-1, 5)
    h, w1 = prefix.shape
    w = w1 - 1
    out = np.zeros(len(ell), dtype=np.int64)
    if len(ell) == 0 or h == 0 or w == 0:
        return out

    cx = ell[:, 0:1]
    cy = ell[:, 1:2]
    big = ell[:, 2:3]
    small = ell[:, 3:4]
    c = np.cos(ell[:, 4:5])
    s = np.sin(ell[:, 4:5])
    valid = (big[:, 0] > 0) & (small[:, 0] > 0)
    big = np.where(big > 0, big, 1.0)
    small = np.where(small > 0, small, 1.0)

    ys = np.arange(h, dtype=np.float64)[None, :]
    dy = ys - cy
    inv_big2 = 1.0 / (big * big)
    inv_small2 = 1.0 / (small * small)
    a2 = c * c * inv_big2 + s * s * inv_small2
    b2 = 2.0 * dy * c * s * (inv_big2 - inv_small2)
    c2 = dy * dy * (s * s * inv_big2 + c * c * inv_small2) - 1.0
    disc = b2 * b2 - 4.0 * a2 * c2
    row_ok = disc >= 0.0
    sq = np.sqrt(np.where(row_ok, disc, 0.0))
    x_lo = cx + (-b2 - sq) / (2.0 * a2)
    x_hi = cx + (-b2 + sq) / (2.0 * a2)
    lo = np.maximum(np.ceil(x_lo), 0.0)
    hi = np.minimum(np.floor(x_hi), w - 1.0)
    row_ok &= hi >= lo
    lo_i = np.where(row_ok, lo, 0).astype(np.int64)
    hi_i = np.where(row_ok, hi + 1, 0).astype(np.int64)
    rows = np.broadcast_to(np.arange(h)[None, :], lo_i.shape)
    spans = prefix[rows, hi_i] - prefix[rows, lo_i]
    out[:] = np.where(row_ok, spans, 0).sum(axis=1)
    out[~valid] = 0
    return out
