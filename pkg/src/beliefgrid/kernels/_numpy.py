"""Pure-numpy backend.

Same signatures and accumulation order as the numba backend, vectorised over
whole channels. The two sequential loops (dithering and ray casting of single
rays) fall back to plain Python.
"""

import math

import numpy as np

from . import _loops

NAME = "numpy"
cast_ray = _loops.cast_ray


def _offset(src, oy, ox):
    # dst[..., j, i] = src[..., j + oy, i + ox], zero outside
    h, w = src.shape[-2:]
    dst = np.zeros_like(src)
    j0, j1 = max(0, -oy), min(h, h - oy)
    i0, i1 = max(0, -ox), min(w, w - ox)
    if j0 < j1 and i0 < i1:
        dst[..., j0:j1, i0:i1] = src[..., j0 + oy:j1 + oy, i0 + ox:i1 + ox]
    return dst


def _shift(src, dx, dy):
    bx = math.floor(-dx)
    by = math.floor(-dy)
    fx = -dx - bx
    fy = -dy - by
    ox, oy = int(bx), int(by)
    if fx == 0.0 and fy == 0.0:
        return _offset(src, oy, ox)
    out = ((1.0 - fx) * (1.0 - fy)) * _offset(src, oy, ox)
    out += (fx * (1.0 - fy)) * _offset(src, oy, ox + 1)
    out += ((1.0 - fx) * fy) * _offset(src, oy + 1, ox)
    out += (fx * fy) * _offset(src, oy + 1, ox + 1)
    return out


def _correlate(src, kern):
    kh, kw = kern.shape
    ry, rx = kh // 2, kw // 2
    dst = np.zeros_like(src)
    for a in range(kh):
        for b in range(kw):
            kv = kern[a, b]
            if kv == 0.0:
                continue
            dst += kv * _offset(src, a - ry, b - rx)
    return dst


def shift_pass(belief, mask, shifts, out):
    for k in range(belief.shape[0]):
        out[k] = _shift(belief[k], shifts[k, 0], shifts[k, 1]) * mask


def motion_pass(belief, mask, shifts, kernels, offset, out):
    n = belief.shape[0]
    for k in range(n):
        tmp = _shift(belief[k], shifts[k, 0], shifts[k, 1]) * mask
        out[k] = _correlate(tmp, kernels[(k + offset) % n])


def angular_pass(src, ang, scale, offset, out):
    r = ang.shape[0] // 2
    acc = np.zeros_like(src)
    for d in range(ang.shape[0]):
        acc += ang[d] * np.roll(src, -(d - r), axis=0)
    acc *= scale if scale.shape[0] == 1 else np.roll(scale, -offset, axis=0)
    # flush near-subnormal values, matching the compiled backend
    info = np.finfo(acc.dtype)
    acc[acc < info.tiny / info.eps] = 0
    out[...] = acc
    return float(acc.max()) if acc.size else 0.0


def _gather(logscore, ex, ey, log_floor):
    h, w = logscore.shape
    ix = np.floor(ex).astype(np.int64)
    iy = np.floor(ey).astype(np.int64)
    ok = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
    vals = np.full(ex.shape, log_floor)
    vals[ok] = logscore[iy[ok], ix[ok]]
    return vals


def loglik_grid(logscore, cx, cy, cos_tab, sin_tab, ranges, log_floor, chunk=256):
    n = cx.shape[0]
    nb = ranges.shape[0]
    out = np.empty((n, cos_tab.shape[0]))
    dx = ranges[None, :] * cos_tab
    dy = ranges[None, :] * sin_tab
    for s in range(0, n, chunk):
        ex = cx[s:s + chunk, None, None] + dx[None]
        ey = cy[s:s + chunk, None, None] + dy[None]
        out[s:s + chunk] = _gather(logscore, ex, ey, log_floor).sum(axis=-1) / nb
    return out


def loglik_poses(logscore, xs, ys, thetas, beam_angles, ranges, log_floor):
    a = thetas[:, None] + beam_angles[None, :]
    ex = xs[:, None] + ranges[None, :] * np.cos(a)
    ey = ys[:, None] + ranges[None, :] * np.sin(a)
    return _gather(logscore, ex, ey, log_floor).sum(axis=-1) / ranges.shape[0]


def cast_rays(occ, xs, ys, angles, max_t):
    """Vectorised DDA: all rays advance one boundary crossing per iteration."""
    h, w = occ.shape
    n = xs.shape[0]
    c = np.cos(angles)
    s = np.sin(angles)
    ix = np.floor(xs).astype(np.int64)
    iy = np.floor(ys).astype(np.int64)
    out = np.full(n, -1.0)
    inside = (ix >= 0) & (iy >= 0) & (ix < w) & (iy < h)
    active = inside.copy()
    active[inside] = ~occ[iy[inside], ix[inside]]

    with np.errstate(divide="ignore", invalid="ignore"):
        step_x = np.sign(c).astype(np.int64)
        step_y = np.sign(s).astype(np.int64)
        t_max_x = np.where(c > 0, (ix + 1 - xs) / c, np.where(c < 0, (xs - ix) / -c, np.inf))
        t_max_y = np.where(s > 0, (iy + 1 - ys) / s, np.where(s < 0, (ys - iy) / -s, np.inf))
        t_dx = np.where(c != 0, 1.0 / np.abs(c), np.inf)
        t_dy = np.where(s != 0, 1.0 / np.abs(s), np.inf)

    tol = _loops.CORNER_TOL
    while active.any():
        a = np.nonzero(active)[0]
        tx, ty = t_max_x[a], t_max_y[a]
        go_x = tx < ty - tol
        go_y = ~go_x & (ty < tx - tol)
        both = ~go_x & ~go_y
        t = np.where(go_x, tx, np.where(go_y, ty, np.minimum(tx, ty)))
        mx = go_x | both
        my = go_y | both
        ix[a[mx]] += step_x[a[mx]]
        t_max_x[a[mx]] += t_dx[a[mx]]
        iy[a[my]] += step_y[a[my]]
        t_max_y[a[my]] += t_dy[a[my]]

        done_range = t >= max_t
        out[a[done_range]] = max_t
        rest = ~done_range
        jx, jy = ix[a], iy[a]
        off = rest & ((jx < 0) | (jy < 0) | (jx >= w) | (jy >= h))
        out[a[off]] = t[off]
        chk = rest & ~off
        hit = np.zeros(a.shape[0], dtype=bool)
        hit[chk] = occ[jy[chk], jx[chk]]
        out[a[hit]] = t[hit]
        active[a[done_range | off | hit]] = False
    return out


def dither(vals):
    n_pos = max(int(np.count_nonzero(vals > 0)), 1)
    out_j = np.empty(n_pos, dtype=np.int64)
    out_i = np.empty(n_pos, dtype=np.int64)
    n = _loops.dither(vals, out_j, out_i)
    return out_j[:n], out_i[:n]
