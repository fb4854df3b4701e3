"""Compiled kernel-moment accumulators for the local polynomial smoothers.

Each accumulator visits, for every observation, only the evaluation points
inside its kernel window, which is what makes repeated FPCA fits cheap.
Evaluation grids must be sorted ascending.
"""

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _epan(u):
    if u <= -1.0 or u >= 1.0:
        return 0.0
    return 0.75 * (1.0 - u * u)


@njit(cache=True)
def moments_1d(x, y, x0, h):
    """Columns s0, s1, s2, t0, t1 of the local linear normal equations at ``x0``."""
    out = np.zeros((x0.size, 5))
    for i in range(x.size):
        lo = np.searchsorted(x0, x[i] - h, side="right")
        hi = np.searchsorted(x0, x[i] + h, side="left")
        for g in range(lo, hi):
            d = x[i] - x0[g]
            w = _epan(d / h)
            wd = w * d
            out[g, 0] += w
            out[g, 1] += wd
            out[g, 2] += wd * d
            out[g, 3] += w * y[i]
            out[g, 4] += wd * y[i]
    return out


@njit(cache=True)
def moments_2d(s, t, z, gs, gt, h):
    """Product-kernel moments at every ``(gs[a], gt[b])``.

    Last axis: s00, s10, s01, s20, s11, s02, t0, t1, t2 where ``sjk`` sums
    ``w ds^j dt^k`` and ``t0, t1, t2`` sum ``w z``, ``w z ds``, ``w z dt``.
    """
    out = np.zeros((gs.size, gt.size, 9))
    ws = np.empty(gs.size)
    wt = np.empty(gt.size)
    for i in range(s.size):
        a0 = np.searchsorted(gs, s[i] - h, side="right")
        a1 = np.searchsorted(gs, s[i] + h, side="left")
        b0 = np.searchsorted(gt, t[i] - h, side="right")
        b1 = np.searchsorted(gt, t[i] + h, side="left")
        if a0 >= a1 or b0 >= b1:
            continue
        for a in range(a0, a1):
            ws[a] = _epan((s[i] - gs[a]) / h)
        for b in range(b0, b1):
            wt[b] = _epan((t[i] - gt[b]) / h)
        zi = z[i]
        for a in range(a0, a1):
            if ws[a] == 0.0:
                continue
            ds = s[i] - gs[a]
            wa = ws[a]
            for b in range(b0, b1):
                w = wa * wt[b]
                dt = t[i] - gt[b]
                wds = w * ds
                wdt = w * dt
                o = out[a, b]
                o[0] += w
                o[1] += wds
                o[2] += wdt
                o[3] += wds * ds
                o[4] += wds * dt
                o[5] += wdt * dt
                o[6] += w * zi
                o[7] += wds * zi
                o[8] += wdt * zi
    return out


@njit(cache=True)
def moments_rotated(u1, u2, z, x0, h):
    """Moments of the design ``[1, d, u2^2]`` with weights ``K(d/h) K(u2/h)``.

    ``d = u1 - x0``. Last axis: the six upper-triangle entries of the 3x3
    cross-product matrix (00, 01, 02, 11, 12, 22) followed by the three
    right-hand sides.
    """
    out = np.zeros((x0.size, 9))
    for i in range(u1.size):
        v = _epan(u2[i] / h)
        if v == 0.0:
            continue
        q = u2[i] * u2[i]
        lo = np.searchsorted(x0, u1[i] - h, side="right")
        hi = np.searchsorted(x0, u1[i] + h, side="left")
        for g in range(lo, hi):
            d = u1[i] - x0[g]
            w = v * _epan(d / h)
            o = out[g]
            o[0] += w
            o[1] += w * d
            o[2] += w * q
            o[3] += w * d * d
            o[4] += w * d * q
            o[5] += w * q * q
            o[6] += w * z[i]
            o[7] += w * d * z[i]
            o[8] += w * q * z[i]
    return out
