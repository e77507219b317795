"""Sequential inner loops shared by both backends.

These are plain Python written in the numba-compatible subset. The numba
backend compiles them with ``njit``; the numpy backend runs them as-is, which
is slow but fine for the small grids the fallback is meant for.
"""

import math

import numpy as np

# Two DDA boundary crossings closer than this (in cells) are treated as one
# diagonal step through the shared corner.
CORNER_TOL = 1e-9


def cast_ray(occ, x, y, c, s, max_t):
    """Distance in cells from (x, y) along (c, s) to the first occupied cell.

    Returns ``-1.0`` when the origin cell is occupied or off the grid and
    ``max_t`` when nothing is hit within ``max_t``.
    """
    h, w = occ.shape
    ix = int(math.floor(x))
    iy = int(math.floor(y))
    if ix < 0 or iy < 0 or ix >= w or iy >= h or occ[iy, ix]:
        return -1.0
    if c > 0.0:
        step_x = 1
        t_max_x = (ix + 1 - x) / c
        t_dx = 1.0 / c
    elif c < 0.0:
        step_x = -1
        t_max_x = (x - ix) / -c
        t_dx = -1.0 / c
    else:
        step_x = 0
        t_max_x = math.inf
        t_dx = math.inf
    if s > 0.0:
        step_y = 1
        t_max_y = (iy + 1 - y) / s
        t_dy = 1.0 / s
    elif s < 0.0:
        step_y = -1
        t_max_y = (y - iy) / -s
        t_dy = -1.0 / s
    else:
        step_y = 0
        t_max_y = math.inf
        t_dy = math.inf

    while True:
        if t_max_x < t_max_y - CORNER_TOL:
            t = t_max_x
            ix += step_x
            t_max_x += t_dx
        elif t_max_y < t_max_x - CORNER_TOL:
            t = t_max_y
            iy += step_y
            t_max_y += t_dy
        else:
            t = min(t_max_x, t_max_y)
            ix += step_x
            iy += step_y
            t_max_x += t_dx
            t_max_y += t_dy
        if t >= max_t:
            return max_t
        if ix < 0 or iy < 0 or ix >= w or iy >= h:
            return t
        if occ[iy, ix]:
            return t


def cast_rays(occ, xs, ys, angles, max_t, out):
    for n in range(xs.shape[0]):
        out[n] = cast_ray(occ, xs[n], ys[n], math.cos(angles[n]), math.sin(angles[n]), max_t)
    return out


def dither(vals, out_j, out_i):
    """Serpentine Floyd-Steinberg quantization of a pre-scaled mass grid.

    Only cells with positive mass can emit a sample. Error is pushed to the
    positive-mass Floyd-Steinberg neighbours (weights renormalised over the
    ones that exist); when none exist it is carried to the next positive cell
    in scan order, so the only mass lost is the final residual.
    Returns the number of samples written to ``out_j``/``out_i``.
    """
    h, w = vals.shape
    err = np.zeros((h, w))
    carry = 0.0
    n = 0
    for j in range(h):
        if j % 2 == 0:
            i, stop, d = 0, w, 1
        else:
            i, stop, d = w - 1, -1, -1
        while i != stop:
            if vals[j, i] > 0.0:
                v = vals[j, i] + err[j, i] + carry
                carry = 0.0
                if v >= 0.5:
                    out_j[n] = j
                    out_i[n] = i
                    n += 1
                    e = v - 1.0
                else:
                    e = v
                fwd = i + d
                back = i - d
                w_fwd = 0.0
                w_back = 0.0
                w_down = 0.0
                w_diag = 0.0
                if 0 <= fwd < w and vals[j, fwd] > 0.0:
                    w_fwd = 7.0
                if j + 1 < h:
                    if 0 <= back < w and vals[j + 1, back] > 0.0:
                        w_back = 3.0
                    if vals[j + 1, i] > 0.0:
                        w_down = 5.0
                    if 0 <= fwd < w and vals[j + 1, fwd] > 0.0:
                        w_diag = 1.0
                total = w_fwd + w_back + w_down + w_diag
                if total > 0.0:
                    if w_fwd > 0.0:
                        err[j, fwd] += e * w_fwd / total
                    if w_back > 0.0:
                        err[j + 1, back] += e * w_back / total
                    if w_down > 0.0:
                        err[j + 1, i] += e * w_down / total
                    if w_diag > 0.0:
                        err[j + 1, fwd] += e * w_diag / total
                else:
                    carry += e
            i += d
    return n
