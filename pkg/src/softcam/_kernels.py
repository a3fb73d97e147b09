"""Compiled inner loops for the image filters.

All arithmetic runs on integer-valued float64 arrays, so every sum is exact
as long as it stays below 2**53.  Callers are responsible for choosing
integer weights that respect that bound.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def adaptive_u8(img, wx, wy, norm, cn, max_value):
    """Gaussian adaptive threshold of a uint8 image, edge-replicated.

    A pixel is set when ``img * norm > window_sum - cn``.  The row pass runs
    in float32, exact while ``255 * sum(wx)`` stays below 2**24; the column
    pass accumulates in float64.
    """
    h, w = img.shape
    rx = wx.shape[0] // 2
    ry = wy.shape[0] // 2
    row = np.empty(w + 2 * rx, dtype=np.float32)
    tmp = np.empty((h + 2 * ry, w), dtype=np.float32)
    for y in range(h):
        for x in range(w + 2 * rx):
            row[x] = img[y, min(max(x - rx, 0), w - 1)]
        o = tmp[y + ry]
        o[:] = 0.0
        for t in range(wx.shape[0]):
            wt = wx[t]
            for x in range(w):
                o[x] += wt * row[x + t]
    for y in range(ry):
        tmp[y] = tmp[ry]
        tmp[h + ry + y] = tmp[h + ry - 1]
    out = np.empty((h, w), dtype=np.uint8)
    acc = np.empty(w)
    for y in range(h):
        acc[:] = 0.0
        for t in range(wy.shape[0]):
            wt = wy[t]
            s = tmp[y + t]
            for x in range(w):
                acc[x] += wt * s[x]
        src = img[y]
        dst = out[y]
        for x in range(w):
            dst[x] = max_value if src[x] * norm > acc[x] - cn else 0
    return out


@njit(cache=True)
def binary_u8(img, offset):
    h, w = img.shape
    total = 0
    for y in range(h):
        for x in range(w):
            total += img[y, x]
    t = total / (h * w) + offset
    out = np.empty((h, w), dtype=np.uint8)
    for y in range(h):
        for x in range(w):
            out[y, x] = 255 if img[y, x] > t else 0
    return out


@njit(cache=True)
def sobel_u8(img, smooth, deriv):
    """Integer Sobel gradients ``(gx, gy)`` of a uint8 image with edge replication."""
    h, w = img.shape
    k = smooth.shape[0]
    r = k // 2
    row = np.empty(w + 2 * r, dtype=np.int32)
    rs = np.zeros((h + 2 * r, w), dtype=np.int32)
    rd = np.zeros((h + 2 * r, w), dtype=np.int32)
    for y in range(h):
        for x in range(w + 2 * r):
            row[x] = img[y, min(max(x - r, 0), w - 1)]
        a = rs[y + r]
        for t in range(k):
            ws = smooth[t]
            for x in range(w):
                a[x] += ws * row[x + t]
        b = rd[y + r]
        for t in range(k):
            wd = deriv[t]
            if wd == 0:
                continue
            for x in range(w):
                b[x] += wd * row[x + t]
    for y in range(r):
        rs[y] = rs[r]
        rd[y] = rd[r]
        rs[h + r + y] = rs[h + r - 1]
        rd[h + r + y] = rd[h + r - 1]
    gx = np.zeros((h, w), dtype=np.int32)
    gy = np.zeros((h, w), dtype=np.int32)
    for y in range(h):
        ox = gx[y]
        for t in range(k):
            ws = smooth[t]
            sd = rd[y + t]
            for x in range(w):
                ox[x] += ws * sd[x]
        oy = gy[y]
        for t in range(k):
            wd = deriv[t]
            if wd == 0:
                continue
            ss = rs[y + t]
            for x in range(w):
                oy[x] += wd * ss[x]
    return gx, gy


@njit(cache=True)
def pool_sums(img, rows, cols):
    """Integer sums of ``img`` over the grid cells given by edge arrays ``rows`` and ``cols``."""
    s = rows.shape[0] - 1
    t = cols.shape[0] - 1
    out = np.zeros((s, t), dtype=np.int64)
    w = img.shape[1]
    acc = np.empty(w, dtype=np.int64)
    for i in range(s):
        acc[:] = 0
        for y in range(rows[i], rows[i + 1]):
            for x in range(w):
                acc[x] += img[y, x]
        for j in range(t):
            tot = 0
            for x in range(cols[j], cols[j + 1]):
                tot += acc[x]
            out[i, j] = tot
    return out


# tan(22.5 deg) and tan(67.5 deg) in Q15 fixed point
_TG22 = 13573.0
_TG67 = 79109.0
_ONE = 32768.0


@njit(cache=True)
def _mag2(gx, gy, y, x):
    a = np.float64(gx[y, x])
    b = np.float64(gy[y, x])
    return a * a + b * b


@njit(cache=True)
def canny_core(gx, gy, low2, high2):
    h, w = gx.shape
    cand = np.zeros((h, w), dtype=np.uint8)
    for y in range(h):
        for x in range(w):
            m = _mag2(gx, gy, y, x)
            if not m > low2:
                continue
            ax = abs(np.float64(gx[y, x]))
            ay = abs(np.float64(gy[y, x]))
            if ay * _ONE < ax * _TG22:
                y0, x0, y1, x1 = y, x - 1, y, x + 1
            elif ay * _ONE > ax * _TG67:
                y0, x0, y1, x1 = y - 1, x, y + 1, x
            elif (gx[y, x] > 0) == (gy[y, x] > 0):
                y0, x0, y1, x1 = y - 1, x - 1, y + 1, x + 1
            else:
                y0, x0, y1, x1 = y - 1, x + 1, y + 1, x - 1
            m0 = 0.0
            if 0 <= y0 < h and 0 <= x0 < w:
                m0 = _mag2(gx, gy, y0, x0)
            m1 = 0.0
            if 0 <= y1 < h and 0 <= x1 < w:
                m1 = _mag2(gx, gy, y1, x1)
            if m > m0 and m >= m1:
                cand[y, x] = 2 if m > high2 else 1

    out = np.zeros((h, w), dtype=np.uint8)
    stack = np.empty(h * w, dtype=np.int32)
    top = 0
    for y in range(h):
        for x in range(w):
            if cand[y, x] == 2:
                out[y, x] = 255
                stack[top] = y * w + x
                top += 1
    while top > 0:
        top -= 1
        cy = stack[top] // w
        cx = stack[top] % w
        for ny in range(max(cy - 1, 0), min(cy + 2, h)):
            for nx in range(max(cx - 1, 0), min(cx + 2, w)):
                if cand[ny, nx] != 0 and out[ny, nx] == 0:
                    out[ny, nx] = 255
                    stack[top] = ny * w + nx
                    top += 1
    return out


@njit(cache=True)
def _soft(sd, fp):
    """Coverage of a pixel of footprint ``fp`` whose center is ``sd`` inside an edge."""
    c = sd / fp + 0.5
    if c <= 0.0:
        return 0.0
    if c >= 1.0:
        return 1.0
    return c


@njit(cache=True)
def render_layers(h, w, f, cx, cy, depth, sx, sy, cut, outer, ring, ring_hw, dashes,
                  dot_x, dot_y, dot_r, band_lo, band_hi):
    """Coverage in [0, 1] of the white pattern seen through stacked annular layers.

    Layers are ordered nearest first.  A ray stops at the first layer whose
    fabric it hits (cut-out radius <= rho <= outer); rays beyond ``outer``
    hit the dark side wall.  Pattern elements of layer ``j`` lie within
    ``[band_lo[j], band_hi[j]]`` in radius.
    """
    out = np.zeros((h, w))
    nl = depth.shape[0]
    nd = dot_x.shape[1]
    two_pi = 2.0 * np.pi
    for v in range(h):
        dv = (v + 0.5 - cy) / f
        for u in range(w):
            du = (u + 0.5 - cx) / f
            for j in range(nl):
                d = depth[j]
                px = du * d - sx[j]
                py = dv * d - sy[j]
                rho = np.sqrt(px * px + py * py)
                if rho > outer:
                    break
                if rho < cut[j]:
                    continue
                fp = d / f
                if rho < band_lo[j] - fp or rho > band_hi[j] + fp:
                    break
                theta = np.arctan2(py, px)
                if theta < 0.0:
                    theta += two_pi
                cov = 0.0
                # dashed ring
                rc = _soft(ring_hw - abs(rho - ring[j]), fp)
                if rc > 0.0:
                    period = two_pi * ring[j] / dashes[j]
                    a = (theta / two_pi * dashes[j]) % 1.0 * period
                    half = 0.5 * period
                    if a < half:
                        sd = min(a, half - a)
                    else:
                        sd = -min(a - half, period - a)
                    cov = rc * _soft(sd, fp)
                # dots on jittered angular slots
                k0 = int(np.floor(theta / two_pi * nd + 0.5))
                for dk in range(-1, 2):
                    k = (k0 + dk) % nd
                    ddx = px - dot_x[j, k]
                    ddy = py - dot_y[j, k]
                    c = _soft(dot_r - np.sqrt(ddx * ddx + ddy * ddy), fp)
                    if c > cov:
                        cov = c
                out[v, u] = cov
                break
    return out


@njit(cache=True)
def expose(cov, scale, noise, sigma):
    """``clip(rint(scale * cov + sigma * noise), 0, 255)`` as uint8."""
    h, w = cov.shape
    out = np.empty((h, w), dtype=np.uint8)
    for y in range(h):
        for x in range(w):
            v = np.rint(scale * cov[y, x] + sigma * noise[y, x])
            out[y, x] = 0 if v < 0.0 else (255 if v > 255.0 else np.uint8(v))
    return out
