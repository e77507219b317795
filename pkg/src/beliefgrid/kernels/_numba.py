"""numba backend. Channel loops run under ``prange``; every output element is
computed by one thread in a fixed order, so results do not depend on the
thread count."""

import math

import numpy as np
from numba import config, njit, prange

# Prefer OpenMP over an outdated TBB; avoids a noisy warning at first launch.
config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

from . import _loops

cast_ray = njit(cache=True)(_loops.cast_ray)
_dither = njit(cache=True)(_loops.dither)

NAME = "numba"


@njit(cache=True)
def _shift_into(src, maskf, dx, dy, dst, py, px):
    # dst[j + py, i + px] = maskf[j, i] * bilinear sample of src at
    # (i - dx, j - dy), zero outside the grid. Interior spans use
    # nonnegative offsets only so LLVM can vectorise them.
    h, w = src.shape
    bx = math.floor(-dx)
    by = math.floor(-dy)
    fx = -dx - bx
    fy = -dy - by
    ox = int(bx)
    oy = int(by)
    w00 = (1.0 - fx) * (1.0 - fy)
    w01 = fx * (1.0 - fy)
    w10 = (1.0 - fx) * fy
    w11 = fx * fy
    exact = fx == 0.0 and fy == 0.0
    # columns whose taps si and si + 1 are both on the grid
    lo = max(0, -ox)
    hi = min(w, w - ox - 1)
    if exact:
        hi = min(w, w - ox)
    lo = min(lo, w)
    hi = max(hi, lo)
    for j in range(h):
        sj = j + oy
        drow = dst[j + py, px:px + w]
        mrow = maskf[j]
        for e in range(lo + w - hi):
            # edge columns, where a tap may fall off the grid
            i = e if e < lo else hi + e - lo
            si = i + ox
            acc = 0.0
            if exact:
                if 0 <= sj < h and 0 <= si < w:
                    acc = src[sj, si]
            else:
                if 0 <= sj < h:
                    if 0 <= si < w:
                        acc += w00 * src[sj, si]
                    if 0 <= si + 1 < w:
                        acc += w01 * src[sj, si + 1]
                if 0 <= sj + 1 < h:
                    if 0 <= si < w:
                        acc += w10 * src[sj + 1, si]
                    if 0 <= si + 1 < w:
                        acc += w11 * src[sj + 1, si + 1]
            drow[i] = mrow[i] * acc
        if hi <= lo:
            continue
        m = mrow[lo:hi]
        d = drow[lo:hi]
        top = 0 <= sj < h
        bot = 0 <= sj + 1 < h
        if exact:
            if top:
                a = src[sj, lo + ox:hi + ox]
                for t in range(hi - lo):
                    d[t] = m[t] * a[t]
            else:
                for t in range(hi - lo):
                    d[t] = 0.0
        elif top and bot:
            a = src[sj, lo + ox:hi + ox + 1]
            b = src[sj + 1, lo + ox:hi + ox + 1]
            for t in range(hi - lo):
                d[t] = m[t] * (w00 * a[t] + w01 * a[t + 1] + w10 * b[t] + w11 * b[t + 1])
        elif top:
            a = src[sj, lo + ox:hi + ox + 1]
            for t in range(hi - lo):
                d[t] = m[t] * (w00 * a[t] + w01 * a[t + 1])
        elif bot:
            b = src[sj + 1, lo + ox:hi + ox + 1]
            for t in range(hi - lo):
                d[t] = m[t] * (w10 * b[t] + w11 * b[t + 1])
        else:
            for t in range(hi - lo):
                d[t] = 0.0


@njit(cache=True)
def _correlate3(pad, kern, dst):
    # unrolled 3x3 case; same tap order as the general loop
    h, w = dst.shape
    k00, k01, k02 = kern[0, 0], kern[0, 1], kern[0, 2]
    k10, k11, k12 = kern[1, 0], kern[1, 1], kern[1, 2]
    k20, k21, k22 = kern[2, 0], kern[2, 1], kern[2, 2]
    for j in range(h):
        r0 = pad[j]
        r1 = pad[j + 1]
        r2 = pad[j + 2]
        row = dst[j]
        for i in range(w):
            acc = k00 * r0[i]
            acc += k01 * r0[i + 1]
            acc += k02 * r0[i + 2]
            acc += k10 * r1[i]
            acc += k11 * r1[i + 1]
            acc += k12 * r1[i + 2]
            acc += k20 * r2[i]
            acc += k21 * r2[i + 1]
            acc += k22 * r2[i + 2]
            row[i] = acc


@njit(cache=True)
def _correlate_padded(pad, kern, dst):
    # dst[j, i] = sum_ab kern[a, b] * pad[j + a, i + b]; pad carries a zero
    # border of kernel radius, so all offsets are nonnegative
    h, w = dst.shape
    kh, kw = kern.shape
    if kh == 3 and kw == 3:
        _correlate3(pad, kern, dst)
        return
    for j in range(h):
        row = dst[j]
        for i in range(w):
            row[i] = 0.0
        for a in range(kh):
            prow = pad[j + a]
            for b in range(kw):
                kv = kern[a, b]
                if kv == 0.0:
                    continue
                for i in range(w):
                    row[i] += kv * prow[i + b]


@njit(parallel=True, cache=True)
def shift_pass(belief, mask, shifts, out):
    n = belief.shape[0]
    maskf = mask.astype(belief.dtype)
    for k in prange(n):
        _shift_into(belief[k], maskf, shifts[k, 0], shifts[k, 1], out[k], 0, 0)


@njit(parallel=True, cache=True)
def motion_pass(belief, mask, shifts, kernels, offset, out):
    """Shift, mask and spatially blur every channel into ``out``."""
    n, h, w = belief.shape
    ry = kernels.shape[1] // 2
    rx = kernels.shape[2] // 2
    maskf = mask.astype(belief.dtype)
    for k in prange(n):
        pad = np.zeros((h + 2 * ry, w + 2 * rx), dtype=belief.dtype)
        _shift_into(belief[k], maskf, shifts[k, 0], shifts[k, 1], pad, ry, rx)
        _correlate_padded(pad, kernels[(k + offset) % n], out[k])


@njit(parallel=True, cache=True)
def angular_pass(src, ang, scale, offset, out):
    """Circular blur across channels, then multiply by
    ``scale[(k + offset) % len(scale)]`` (``scale`` may be a single plane).

    Parallel over rows so the channel neighbourhood of a row stays in cache.
    Results below ``tiny / eps`` are flushed to zero so that the next pass
    (products with weights >= eps) never touches subnormals; long runs
    otherwise fill decayed regions with them and every pass slows down.
    Returns the global maximum of ``out``.
    """
    n, h, w = src.shape
    info = np.finfo(out.dtype)
    tiny = info.tiny / info.eps
    na = ang.shape[0]
    r = na // 2
    ns = scale.shape[0]
    maxes = np.zeros(h)
    for j in prange(h):
        # elementwise running max vectorises; a scalar one does not
        mrow = np.zeros(w, dtype=out.dtype)
        for k in range(n):
            row = out[k, j]
            a = ang[0]
            srow = src[(k - r) % n, j]
            for i in range(w):
                row[i] = a * srow[i]
            for d in range(1, na):
                a = ang[d]
                srow = src[(k + d - r) % n, j]
                for i in range(w):
                    row[i] += a * srow[i]
            scrow = scale[(k + offset) % ns, j]
            for i in range(w):
                v = row[i] * scrow[i]
                v = v if v >= tiny else 0.0
                row[i] = v
                mrow[i] = v if v > mrow[i] else mrow[i]
        maxes[j] = mrow.max() if w > 0 else 0.0
    return maxes.max() if h > 0 else 0.0


@njit(parallel=True, cache=True)
def loglik_grid(logscore, cx, cy, cos_tab, sin_tab, ranges, log_floor):
    """Mean per-beam log score for poses at (cx[p], cy[p]) x heading rows of
    the cos/sin tables. All lengths are in cells."""
    h, w = logscore.shape
    n = cx.shape[0]
    nt, nb = cos_tab.shape
    out = np.empty((n, nt))
    for p in prange(n):
        x0 = cx[p]
        y0 = cy[p]
        for t in range(nt):
            acc = 0.0
            for b in range(nb):
                r = ranges[b]
                ix = int(math.floor(x0 + r * cos_tab[t, b]))
                iy = int(math.floor(y0 + r * sin_tab[t, b]))
                if 0 <= ix < w and 0 <= iy < h:
                    acc += logscore[iy, ix]
                else:
                    acc += log_floor
            out[p, t] = acc / nb
    return out


@njit(parallel=True, cache=True)
def loglik_poses(logscore, xs, ys, thetas, beam_angles, ranges, log_floor):
    h, w = logscore.shape
    n = xs.shape[0]
    nb = ranges.shape[0]
    out = np.empty(n)
    for p in prange(n):
        acc = 0.0
        for b in range(nb):
            a = thetas[p] + beam_angles[b]
            r = ranges[b]
            ix = int(math.floor(xs[p] + r * math.cos(a)))
            iy = int(math.floor(ys[p] + r * math.sin(a)))
            if 0 <= ix < w and 0 <= iy < h:
                acc += logscore[iy, ix]
            else:
                acc += log_floor
        out[p] = acc / nb
    return out


@njit(parallel=True, cache=True)
def _cast_rays(occ, xs, ys, angles, max_t, out):
    for n in prange(xs.shape[0]):
        out[n] = cast_ray(occ, xs[n], ys[n], math.cos(angles[n]), math.sin(angles[n]), max_t)
    return out


def cast_rays(occ, xs, ys, angles, max_t):
    out = np.empty(xs.shape[0])
    return _cast_rays(occ, xs, ys, angles, max_t, out)


def dither(vals):
    n_pos = max(int(np.count_nonzero(vals > 0)), 1)
    out_j = np.empty(n_pos, dtype=np.int64)
    out_i = np.empty(n_pos, dtype=np.int64)
    n = _dither(vals, out_j, out_i)
    return out_j[:n], out_i[:n]
