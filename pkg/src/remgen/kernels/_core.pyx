# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels.

Bit-identical twin of ``_purepy``: same expressions, same evaluation
order, same tie conventions. Compiled with -ffp-contract=off so float
roundings match the numpy backend exactly. See _purepy for the layout
contracts (im2col/col2im are channel-major with implicit zero padding).
"""

import numpy as np

cimport numpy as cnp
from cython.parallel import prange

cnp.import_array()

BACKEND = "compiled"

ctypedef fused floating:
    float
    double


def im2col(floating[:, :, :, ::1] x, Py_ssize_t kh, Py_ssize_t kw,
           Py_ssize_t ph, Py_ssize_t pw, bint append_ones=False):
    cdef Py_ssize_t c = x.shape[0]
    cdef Py_ssize_t n = x.shape[1]
    cdef Py_ssize_t h = x.shape[2]
    cdef Py_ssize_t w = x.shape[3]
    cdef Py_ssize_t oh = h + 2 * ph - kh + 1
    cdef Py_ssize_t ow = w + 2 * pw - kw + 1
    dtype = np.float32 if floating is float else np.float64
    out = np.empty((c * kh * kw + (1 if append_ones else 0), n * oh * ow),
                   dtype=dtype)
    if append_ones:
        out[c * kh * kw] = 1.0
    cdef floating[:, ::1] cols = out
    cdef Py_ssize_t ch, ky, kx, b, oy, ox, row, base, sy, x0, x1
    # rows are independent: parallel gather, no shared writes
    for row in prange(c * kh * kw, nogil=True, schedule="static"):
        ch = row // (kh * kw)
        ky = (row // kw) % kh
        kx = row % kw
        for b in range(n):
            for oy in range(oh):
                base = (b * oh + oy) * ow
                sy = oy + ky - ph
                if sy < 0 or sy >= h:
                    for ox in range(ow):
                        cols[row, base + ox] = 0.0
                    continue
                # valid ox run: 0 <= ox + kx - pw < w
                x0 = pw - kx
                if x0 < 0:
                    x0 = 0
                x1 = w + pw - kx
                if x1 > ow:
                    x1 = ow
                for ox in range(0, x0):
                    cols[row, base + ox] = 0.0
                for ox in range(x0, x1):
                    cols[row, base + ox] = x[ch, b, sy, ox + kx - pw]
                for ox in range(x1, ow):
                    cols[row, base + ox] = 0.0
    return out


def col2im_add(floating[:, ::1] dcols, Py_ssize_t c, Py_ssize_t n,
               Py_ssize_t h, Py_ssize_t w, Py_ssize_t kh, Py_ssize_t kw,
               Py_ssize_t ph, Py_ssize_t pw):
    cdef Py_ssize_t oh = h + 2 * ph - kh + 1
    cdef Py_ssize_t ow = w + 2 * pw - kw + 1
    dtype = np.float32 if floating is float else np.float64
    out = np.zeros((c, n, h, w), dtype=dtype)
    cdef floating[:, :, :, ::1] dx = out
    cdef Py_ssize_t ch, ky, kx, b, oy, ox, row, base, sy, x0, x1
    # parallel over channels: each channel owns its dx slab, and within a
    # channel the (ky, kx) order fixes the per-element accumulation
    # sequence to match the numpy loop exactly.
    for ch in prange(c, nogil=True, schedule="static"):
        for ky in range(kh):
            for kx in range(kw):
                row = (ch * kh + ky) * kw + kx
                for b in range(n):
                    for oy in range(oh):
                        sy = oy + ky - ph
                        if sy < 0 or sy >= h:
                            continue
                        base = (b * oh + oy) * ow
                        x0 = pw - kx
                        if x0 < 0:
                            x0 = 0
                        x1 = w + pw - kx
                        if x1 > ow:
                            x1 = ow
                        for ox in range(x0, x1):
                            dx[ch, b, sy, ox + kx - pw] += dcols[row, base + ox]
    return out


def maxpool2x2(floating[:, :, :, ::1] x):
    cdef Py_ssize_t a = x.shape[0]
    cdef Py_ssize_t b = x.shape[1]
    cdef Py_ssize_t h2 = x.shape[2] // 2
    cdef Py_ssize_t w2 = x.shape[3] // 2
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.empty((a, b, h2, w2), dtype=dtype)
    idx_arr = np.empty((a, b, h2, w2), dtype=np.uint8)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef unsigned char[:, :, :, ::1] idx = idx_arr
    cdef Py_ssize_t p, q, i, j
    cdef floating v0, v1, v2, v3, best
    cdef unsigned char bi
    for p in prange(a, nogil=True, schedule="static"):
        for q in range(b):
            for i in range(h2):
                for j in range(w2):
                    v0 = x[p, q, 2 * i, 2 * j]
                    v1 = x[p, q, 2 * i, 2 * j + 1]
                    v2 = x[p, q, 2 * i + 1, 2 * j]
                    v3 = x[p, q, 2 * i + 1, 2 * j + 1]
                    best = v0
                    bi = 0
                    if v1 > best:
                        best = v1
                        bi = 1
                    if v2 > best:
                        best = v2
                        bi = 2
                    if v3 > best:
                        best = v3
                        bi = 3
                    out[p, q, i, j] = best
                    idx[p, q, i, j] = bi
    return out_arr, idx_arr


def affine_pool2x2(floating[:, :, :, ::1] x, floating[::1] a, floating[::1] b):
    """Per-channel affine y = a*x + b fused with 2x2 max pooling.

    Selects the first max of the raw window for a >= 0 and the first min
    for a < 0 (equivalent to pooling the transformed grid); the affine
    is applied to the winner only.
    """
    cdef Py_ssize_t ca = x.shape[0]
    cdef Py_ssize_t nb = x.shape[1]
    cdef Py_ssize_t h2 = x.shape[2] // 2
    cdef Py_ssize_t w2 = x.shape[3] // 2
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.empty((ca, nb, h2, w2), dtype=dtype)
    idx_arr = np.empty((ca, nb, h2, w2), dtype=np.uint8)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef unsigned char[:, :, :, ::1] idx = idx_arr
    cdef Py_ssize_t p, q, i, j
    cdef floating v0, v1, v2, v3, best, ac, bc
    cdef unsigned char bi
    cdef bint take_max
    for p in prange(ca, nogil=True, schedule="static"):
        ac = a[p]
        bc = b[p]
        take_max = ac >= 0
        for q in range(nb):
            for i in range(h2):
                for j in range(w2):
                    v0 = x[p, q, 2 * i, 2 * j]
                    v1 = x[p, q, 2 * i, 2 * j + 1]
                    v2 = x[p, q, 2 * i + 1, 2 * j]
                    v3 = x[p, q, 2 * i + 1, 2 * j + 1]
                    best = v0
                    bi = 0
                    if take_max:
                        if v1 > best:
                            best = v1
                            bi = 1
                        if v2 > best:
                            best = v2
                            bi = 2
                        if v3 > best:
                            best = v3
                            bi = 3
                    else:
                        if v1 < best:
                            best = v1
                            bi = 1
                        if v2 < best:
                            best = v2
                            bi = 2
                        if v3 < best:
                            best = v3
                            bi = 3
                    out[p, q, i, j] = best * ac + bc
                    idx[p, q, i, j] = bi
    return out_arr, idx_arr


def bn_backward_apply(floating[:, :, :, ::1] dy, floating[:, :, :, ::1] x,
                      floating[::1] g, floating[::1] c2, floating[::1] c1):
    """In-place dy = dy*g + x*c2 + c1 with per-channel coefficients.

    Rounds exactly like the numpy sequence dy *= g; dy += x*c2; dy += c1.
    """
    cdef Py_ssize_t ca = dy.shape[0]
    cdef Py_ssize_t nb = dy.shape[1]
    cdef Py_ssize_t h = dy.shape[2]
    cdef Py_ssize_t w = dy.shape[3]
    cdef Py_ssize_t p, q, i, j
    cdef floating gc, a2, a1, t
    for p in prange(ca, nogil=True, schedule="static"):
        gc = g[p]
        a2 = c2[p]
        a1 = c1[p]
        for q in range(nb):
            for i in range(h):
                for j in range(w):
                    t = dy[p, q, i, j] * gc
                    t = t + x[p, q, i, j] * a2
                    dy[p, q, i, j] = t + a1
    return None


def maxpool2x2_backward(floating[:, :, :, ::1] dy,
                        unsigned char[:, :, :, ::1] idx,
                        Py_ssize_t h, Py_ssize_t w):
    cdef Py_ssize_t a = dy.shape[0]
    cdef Py_ssize_t b = dy.shape[1]
    cdef Py_ssize_t h2 = dy.shape[2]
    cdef Py_ssize_t w2 = dy.shape[3]
    dtype = np.float32 if floating is float else np.float64
    out = np.zeros((a, b, h, w), dtype=dtype)
    cdef floating[:, :, :, ::1] dx = out
    cdef Py_ssize_t p, q, i, j
    cdef unsigned char bi
    for p in prange(a, nogil=True, schedule="static"):
        for q in range(b):
            for i in range(h2):
                for j in range(w2):
                    bi = idx[p, q, i, j]
                    dx[p, q, 2 * i + (bi >> 1), 2 * j + (bi & 1)] = dy[p, q, i, j]
    return out


def points_in_polygon(double[::1] px, double[::1] py, double[:, ::1] poly):
    cdef Py_ssize_t m = px.shape[0]
    cdef Py_ssize_t v = poly.shape[0]
    out_arr = np.zeros(m, dtype=bool)
    cdef cnp.uint8_t[::1] inside = out_arr.view(np.uint8)
    cdef Py_ssize_t i, k
    cdef double x1, y1, x2, y2, t
    for k in range(m):
        for i in range(v):
            x1 = poly[i, 0]
            y1 = poly[i, 1]
            x2 = poly[(i + 1) % v, 0]
            y2 = poly[(i + 1) % v, 1]
            if (y1 > py[k]) != (y2 > py[k]):
                t = (x2 - x1) * (py[k] - y1) / (y2 - y1) + x1
                if px[k] < t:
                    inside[k] ^= 1
    return out_arr


def bilinear_batch(double[:, ::1] elev, double x0, double y0, double cell,
                   double[::1] px, double[::1] py):
    cdef Py_ssize_t rows = elev.shape[0]
    cdef Py_ssize_t cols = elev.shape[1]
    cdef Py_ssize_t m = px.shape[0]
    out_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t k, i, j
    cdef double gx, gy, fu, fv, ru, rv, e00, e01, e10, e11
    for k in range(m):
        gx = (px[k] - x0) / cell - 0.5
        gy = (py[k] - y0) / cell - 0.5
        j = <Py_ssize_t> gx
        if gx < 0:
            j = 0
        elif j > cols - 2:
            j = cols - 2
        i = <Py_ssize_t> gy
        if gy < 0:
            i = 0
        elif i > rows - 2:
            i = rows - 2
        fu = gx - j
        fv = gy - i
        ru = 1.0 - fu
        rv = 1.0 - fv
        e00 = elev[i, j]
        e01 = elev[i, j + 1]
        e10 = elev[i + 1, j]
        e11 = elev[i + 1, j + 1]
        out[k] = (e00 * ru + e01 * fu) * rv + (e10 * ru + e11 * fu) * fv
    return out_arr
