"""Pure numpy implementations of the hot kernels.

Drop-in twin of the compiled ``_core`` extension. Both backends must
produce bit-identical outputs: every arithmetic expression here is
written in the exact evaluation order the C code uses, reductions are
avoided (GEMM and batchnorm statistics live outside the kernel layer),
and the extension is compiled with ``-ffp-contract=off`` so no FMA
contraction can change roundings.

Convolution activations use channel-major (C, N, H, W) layout so the
lowered column matrix multiplies against the weight matrix without any
transposition of the big operand.
"""

import numpy as np

BACKEND = "purepy"


def im2col(x, kh, kw, ph, pw, append_ones=False):
    """Lower a (C, N, H, W) batch to a GEMM-ready column matrix.

    Zero padding (ph, pw) is implicit. Returns (C*kh*kw, N*OH*OW) with
    OH = H + 2*ph - kh + 1, OW = W + 2*pw - kw + 1 (stride 1). Row order
    is [c, ky, kx]; column order is [n, oy, ox]. With append_ones a
    trailing all-ones row is added so the GEMM applies the bias too.
    """
    c, n, h, w = x.shape
    xpad = np.zeros((c, n, h + 2 * ph, w + 2 * pw), dtype=x.dtype)
    xpad[:, :, ph:ph + h, pw:pw + w] = x
    oh = h + 2 * ph - kh + 1
    ow = w + 2 * pw - kw + 1
    win = np.lib.stride_tricks.sliding_window_view(xpad, (kh, kw), axis=(2, 3))
    # win: (C, N, OH, OW, kh, kw) -> (C, kh, kw, N, OH, OW)
    cols = win.transpose(0, 4, 5, 1, 2, 3)
    rows = c * kh * kw
    if not append_ones:
        return np.ascontiguousarray(cols).reshape(rows, n * oh * ow)
    out = np.empty((rows + 1, n * oh * ow), dtype=x.dtype)
    out[:rows] = cols.reshape(rows, n * oh * ow)
    out[rows] = 1.0
    return out


def col2im_add(dcols, c, n, h, w, kh, kw, ph, pw):
    """Scatter-add column gradients back onto the (C, N, H, W) input.

    Inverse of :func:`im2col` for the backward pass; contributions to
    each element accumulate in (ky, kx) order, matching the compiled
    kernel so float roundings agree exactly.
    """
    oh = h + 2 * ph - kh + 1
    ow = w + 2 * pw - kw + 1
    d6 = dcols.reshape(c, kh, kw, n, oh, ow)
    dxpad = np.zeros((c, n, h + 2 * ph, w + 2 * pw), dtype=dcols.dtype)
    for ky in range(kh):
        for kx in range(kw):
            dxpad[:, :, ky:ky + oh, kx:kx + ow] += d6[:, ky, kx]
    return np.ascontiguousarray(dxpad[:, :, ph:ph + h, pw:pw + w])


def maxpool2x2(x):
    """2x2/stride-2 max pooling over the last two dims of a 4D array.

    Returns (out, idx) where idx in {0,1,2,3} encodes ky*2+kx of the
    first maximum in each window (ties resolved to the earliest element,
    scanning (0,0),(0,1),(1,0),(1,1)).
    """
    a, b, h, w = x.shape
    h2 = h // 2
    w2 = w // 2
    win = x[:, :, : 2 * h2, : 2 * w2].reshape(a, b, h2, 2, w2, 2)
    win = win.transpose(0, 1, 2, 4, 3, 5).reshape(a, b, h2, w2, 4)
    idx = np.argmax(win, axis=-1).astype(np.uint8)
    out = np.take_along_axis(win, idx[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.ascontiguousarray(out), idx


def affine_pool2x2(x, a, b):
    """Per-channel affine y = a*x + b fused with 2x2 max pooling.

    Pooling selects on the raw values (first max for a > 0, first min
    for a < 0, which equals pooling the affine-transformed grid); the
    affine is applied to the winner only. Returns (out, idx) like
    :func:`maxpool2x2`.
    """
    pos = a >= 0
    out_max, idx_max = maxpool2x2(x)
    out_min, idx_min = maxpool2x2(-x)
    sel = pos.reshape(-1, 1, 1, 1)
    win = np.where(sel, out_max, -out_min)
    idx = np.where(sel, idx_max, idx_min)
    y = win * a.reshape(-1, 1, 1, 1)
    y += b.reshape(-1, 1, 1, 1)
    return y, idx


def bn_backward_apply(dy, x, g, c2, c1):
    """In-place dy = dy*g + x*c2 + c1 with per-channel coefficients."""
    dy *= g.reshape(-1, 1, 1, 1)
    dy += x * c2.reshape(-1, 1, 1, 1)
    dy += c1.reshape(-1, 1, 1, 1)
    return None


def maxpool2x2_backward(dy, idx, h, w):
    """Scatter pooled gradients back to the winning window elements."""
    a, b, h2, w2 = dy.shape
    dwin = np.zeros((a, b, h2, w2, 4), dtype=dy.dtype)
    np.put_along_axis(dwin, idx[..., None].astype(np.intp), dy[..., None], axis=-1)
    dx = np.zeros((a, b, h, w), dtype=dy.dtype)
    dx[:, :, :2 * h2, :2 * w2] = (
        dwin.reshape(a, b, h2, w2, 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(a, b, 2 * h2, 2 * w2))
    return dx


def points_in_polygon(px, py, poly):
    """Crossing-number containment test for a batch of points.

    px, py: (M,) float64; poly: (V, 2) float64 vertex list (closed
    implicitly). Points exactly on the boundary are not guaranteed
    either way; callers keep query points off edges.
    """
    px = np.asarray(px, dtype=np.float64)
    py = np.asarray(py, dtype=np.float64)
    inside = np.zeros(px.shape, dtype=bool)
    v = poly.shape[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        for i in range(v):
            x1 = poly[i, 0]
            y1 = poly[i, 1]
            x2 = poly[(i + 1) % v, 0]
            y2 = poly[(i + 1) % v, 1]
            cond = (y1 > py) != (y2 > py)
            t = (x2 - x1) * (py - y1) / (y2 - y1) + x1
            inside ^= cond & (px < t)
    return inside


def bilinear_batch(elev, x0, y0, cell, px, py):
    """Bilinear interpolation over a regular grid of cell-center nodes.

    elev: (rows, cols) float64, row 0 = southmost row. (x0, y0) is the
    grid origin (southwest corner of the southwest cell); node (r, c)
    sits at (x0 + (c+0.5)*cell, y0 + (r+0.5)*cell). Queries must lie
    within the node hull; indices are clamped defensively, callers
    validate bounds.
    """
    px = np.asarray(px, dtype=np.float64)
    py = np.asarray(py, dtype=np.float64)
    rows, cols = elev.shape
    gx = (px - x0) / cell - 0.5
    gy = (py - y0) / cell - 0.5
    j = np.clip(np.floor(gx), 0, cols - 2).astype(np.intp)
    i = np.clip(np.floor(gy), 0, rows - 2).astype(np.intp)
    fu = gx - j
    fv = gy - i
    e00 = elev[i, j]
    e01 = elev[i, j + 1]
    e10 = elev[i + 1, j]
    e11 = elev[i + 1, j + 1]
    return (e00 * (1.0 - fu) + e01 * fu) * (1.0 - fv) + (e10 * (1.0 - fu) + e11 * fu) * fv
