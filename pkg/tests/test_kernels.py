"""Kernel backends: naive-loop oracles plus compiled/pure equivalence."""

import numpy as np
import pytest

from remgen import kernels

pure = kernels.get_backend("purepy")
try:
    compiled = kernels.get_backend("compiled")
except ImportError:
    compiled = None

needs_compiled = pytest.mark.skipif(compiled is None,
                                    reason="compiled extension not built")


def naive_im2col(x, kh, kw, ph, pw):
    c, n, h, w = x.shape
    oh = h + 2 * ph - kh + 1
    ow = w + 2 * pw - kw + 1
    out = np.zeros((c * kh * kw, n * oh * ow), dtype=x.dtype)
    for ch in range(c):
        for ky in range(kh):
            for kx in range(kw):
                for b in range(n):
                    for oy in range(oh):
                        for ox in range(ow):
                            sy = oy + ky - ph
                            sx = ox + kx - pw
                            v = x[ch, b, sy, sx] if 0 <= sy < h and 0 <= sx < w else 0.0
                            out[(ch * kh + ky) * kw + kx,
                                (b * oh + oy) * ow + ox] = v
    return out


def test_im2col_matches_naive():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 3, 6, 5)).astype(np.float32)
    got = kernels.im2col(x, 3, 3, 2, 2)
    assert np.array_equal(got, naive_im2col(x, 3, 3, 2, 2))


def test_im2col_append_ones_row():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 2, 5, 4)).astype(np.float32)
    got = kernels.im2col(x, 2, 2, 1, 1, True)
    assert got.shape[0] == 2 * 2 * 2 + 1
    assert (got[-1] == 1.0).all()
    assert np.array_equal(got[:-1], kernels.im2col(x, 2, 2, 1, 1))


def test_col2im_is_adjoint_of_im2col():
    # <im2col(x), d> == <x, col2im(d)> characterizes the scatter exactly
    rng = np.random.default_rng(2)
    x = rng.standard_normal((3, 2, 7, 6))
    d = rng.standard_normal((3 * 9, 2 * 9 * 8))
    cols = kernels.im2col(x, 3, 3, 2, 2)
    dx = kernels.col2im_add(d, 3, 2, 7, 6, 3, 3, 2, 2)
    assert np.isclose((cols * d).sum(), (x * dx).sum(), rtol=1e-12)


def test_maxpool_values_and_first_max_ties():
    x = np.array([[[[1.0, 2.0, 5.0, 5.0],
                    [3.0, 3.0, 5.0, 4.0],
                    [7.0, 7.0, 0.0, 0.0],
                    [7.0, 7.0, 0.0, -1.0]]]], dtype=np.float32)
    out, idx = kernels.maxpool2x2(x)
    assert np.array_equal(out[0, 0], [[3.0, 5.0], [7.0, 0.0]])
    # ties resolve to the first element in (0,0),(0,1),(1,0),(1,1) order
    assert idx[0, 0, 0, 1] == 0
    assert idx[0, 0, 1, 0] == 0
    assert idx[0, 0, 1, 1] == 0


def test_maxpool_crops_odd_dimensions():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((2, 2, 7, 5)).astype(np.float32)
    out, _ = kernels.maxpool2x2(x)
    assert out.shape == (2, 2, 3, 2)
    assert np.array_equal(out, kernels.maxpool2x2(np.ascontiguousarray(x[:, :, :6, :4]))[0])


def test_maxpool_outputs_are_window_elements():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((3, 4, 8, 8)).astype(np.float32)
    out, _ = kernels.maxpool2x2(x)
    win = x.reshape(3, 4, 4, 2, 4, 2).transpose(0, 1, 2, 4, 3, 5).reshape(3, 4, 4, 4, 4)
    assert (out[..., None] == win).any(axis=-1).all()


def test_maxpool_backward_routes_to_winner():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((2, 3, 6, 6)).astype(np.float32)
    out, idx = kernels.maxpool2x2(x)
    dy = rng.standard_normal(out.shape).astype(np.float32)
    dx = kernels.maxpool2x2_backward(dy, idx, 6, 6)
    assert dx.shape == x.shape
    # each window gets exactly its dy at the argmax position, zeros elsewhere
    assert np.isclose(dx.sum(), dy.sum(), rtol=1e-6)
    nz = (dx != 0).reshape(2, 3, 3, 2, 3, 2).sum(axis=(3, 5))
    assert (nz <= 1).all()


def test_affine_pool_equals_affine_then_pool():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((4, 2, 8, 6)).astype(np.float32)
    a = rng.standard_normal(4).astype(np.float32)  # mixed signs
    b = rng.standard_normal(4).astype(np.float32)
    got, _ = kernels.affine_pool2x2(x, a, b)
    y = x * a.reshape(-1, 1, 1, 1) + b.reshape(-1, 1, 1, 1)
    want, _ = kernels.maxpool2x2(y)
    assert np.allclose(got, want, rtol=1e-6, atol=1e-6)


def test_points_in_polygon_against_shapely():
    shapely = pytest.importorskip("shapely")
    from shapely.geometry import Point, Polygon

    rng = np.random.default_rng(7)
    poly = np.array([[0.0, 0.0], [4.0, 0.0], [4.0, 1.0], [1.0, 1.0],
                     [1.0, 3.0], [4.0, 3.0], [4.0, 4.0], [0.0, 4.0]])  # C-shape
    sp = Polygon(poly)
    px = rng.uniform(-1, 5, 2000)
    py = rng.uniform(-1, 5, 2000)
    got = kernels.points_in_polygon(px, py, poly)
    want = np.array([sp.contains(Point(x, y)) for x, y in zip(px, py)])
    assert np.array_equal(got, want)


def test_bilinear_against_scipy():
    scipy_interp = pytest.importorskip("scipy.interpolate")
    rng = np.random.default_rng(8)
    elev = rng.standard_normal((7, 9)) * 10
    cs = 25.0
    xs = (np.arange(9) + 0.5) * cs
    ys = (np.arange(7) + 0.5) * cs
    f = scipy_interp.RegularGridInterpolator((ys, xs), elev, method="linear")
    qx = rng.uniform(xs[0], xs[-1], 500)
    qy = rng.uniform(ys[0], ys[-1], 500)
    got = kernels.bilinear_batch(elev, 0.0, 0.0, cs, qx, qy)
    want = f(np.stack([qy, qx], axis=1))
    assert np.allclose(got, want, rtol=1e-12, atol=1e-12)


def test_bilinear_exact_at_nodes_and_midpoints():
    elev = np.array([[1.0, 3.0], [5.0, 7.0]])
    z = kernels.bilinear_batch(elev, 0.0, 0.0, 10.0, np.array([5.0]), np.array([5.0]))
    assert z[0] == 1.0
    z = kernels.bilinear_batch(elev, 0.0, 0.0, 10.0, np.array([10.0]), np.array([5.0]))
    assert z[0] == 2.0  # midpoint of the south row


@needs_compiled
def test_backends_bit_identical():
    rng = np.random.default_rng(9)
    for dtype in (np.float32, np.float64):
        x = rng.standard_normal((4, 3, 9, 7)).astype(dtype)
        for ao in (False, True):
            assert np.array_equal(pure.im2col(x, 3, 3, 3, 3, ao),
                                  compiled.im2col(x, 3, 3, 3, 3, ao))
        d = rng.standard_normal((4 * 9, 3 * 13 * 11)).astype(dtype)
        assert np.array_equal(pure.col2im_add(d, 4, 3, 9, 7, 3, 3, 3, 3),
                              compiled.col2im_add(d, 4, 3, 9, 7, 3, 3, 3, 3))
        po, pi = pure.maxpool2x2(x)
        co, ci = compiled.maxpool2x2(x)
        assert np.array_equal(po, co) and np.array_equal(pi, ci)
        a = rng.standard_normal(4).astype(dtype)
        b = rng.standard_normal(4).astype(dtype)
        po, pi = pure.affine_pool2x2(x, a, b)
        co, ci = compiled.affine_pool2x2(x, a, b)
        assert np.array_equal(po, co) and np.array_equal(pi, ci)
        dy1 = rng.standard_normal(x.shape).astype(dtype)
        dy2 = dy1.copy()
        g = rng.standard_normal(4).astype(dtype)
        c2 = rng.standard_normal(4).astype(dtype)
        c1 = rng.standard_normal(4).astype(dtype)
        pure.bn_backward_apply(dy1, x, g, c2, c1)
        compiled.bn_backward_apply(dy2, x, g, c2, c1)
        assert np.array_equal(dy1, dy2)
        assert np.array_equal(pure.maxpool2x2_backward(po, pi, 9, 7),
                              compiled.maxpool2x2_backward(po, pi, 9, 7))
    poly = np.array([[0.0, 0.0], [3.0, 0.5], [4.0, 3.0], [1.5, 4.5], [-0.5, 2.0]])
    px = rng.uniform(-1, 5, 3000)
    py = rng.uniform(-1, 5, 3000)
    assert np.array_equal(pure.points_in_polygon(px, py, poly),
                          compiled.points_in_polygon(px, py, poly))
    elev = rng.standard_normal((6, 8)) * 5
    qx = rng.uniform(12.5, 25 * 7.5, 1000)
    qy = rng.uniform(12.5, 25 * 5.5, 1000)
    assert np.array_equal(pure.bilinear_batch(elev, 0.0, 0.0, 25.0, qx, qy),
                          compiled.bilinear_batch(elev, 0.0, 0.0, 25.0, qx, qy))
