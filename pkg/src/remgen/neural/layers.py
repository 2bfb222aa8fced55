"""Layer primitives with explicit forward/backward passes.

Arrays are plain numpy, row-major, float32 by default; float64 is used
for gradient verification. Convolutional activations are channel-major
(C, N, H, W): the GEMM result (C_out, N*OH*OW) then IS the next
activation without any transposition, which matters on this
memory-bound workload. Dense activations are (N, F).
"""

from __future__ import annotations

import numpy as np

from .. import kernels

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


class Layer:
    """Minimal layer protocol: params/grads dicts plus forward/backward."""

    def params(self):
        return {}

    def grads(self):
        return {}

    def state(self):
        return {}

    def zero_grads(self):
        for g in self.grads().values():
            g[...] = 0.0


class Linear(Layer):
    def __init__(self, n_in, n_out, rng, dtype=np.float32):
        bound = np.sqrt(6.0 / n_in)
        self.w = rng.uniform(-bound, bound, size=(n_out, n_in)).astype(dtype)
        self.b = np.zeros(n_out, dtype=dtype)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._x = None

    def params(self):
        return {"w": self.w, "b": self.b}

    def grads(self):
        return {"w": self.dw, "b": self.db}

    def forward(self, x, training):
        if training:
            self._x = x
        return x @ self.w.T + self.b

    def backward(self, dy):
        self.dw += dy.T @ self._x
        self.db += dy.sum(axis=0)
        return dy @ self.w


class ReLU(Layer):
    """In-place rectifier; the output reference doubles as the mask source."""

    def __init__(self):
        self._out = None

    def forward(self, x, training):
        np.maximum(x, x.dtype.type(0), out=x)
        if training:
            self._out = x
        return x

    def backward(self, dy):
        dy *= self._out > 0
        return dy


class Conv2d(Layer):
    """Stride-1, dilation-1 convolution with symmetric zero padding."""

    def __init__(self, c_in, c_out, kernel, padding, rng, dtype=np.float32):
        self.c_in = c_in
        self.c_out = c_out
        self.k = kernel
        self.pad = padding
        fan_in = c_in * kernel * kernel
        bound = np.sqrt(6.0 / fan_in)
        self.w = rng.uniform(-bound, bound, size=(c_out, c_in, kernel, kernel)).astype(dtype)
        self.b = np.zeros(c_out, dtype=dtype)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._cols = None
        self._shape = None

    def params(self):
        return {"w": self.w, "b": self.b}

    def grads(self):
        return {"w": self.dw, "b": self.db}

    def out_hw(self, h, w):
        return h + 2 * self.pad - self.k + 1, w + 2 * self.pad - self.k + 1

    def forward(self, x, training):
        c, n, h, w = x.shape
        if c != self.c_in:
            raise ValueError(f"conv expected {self.c_in} channels, got {c}")
        # the appended ones row lets the GEMM apply the bias in one pass
        cols = kernels.im2col(x, self.k, self.k, self.pad, self.pad,
                              append_ones=True)
        wb = np.concatenate([self.w.reshape(self.c_out, -1),
                             self.b[:, None]], axis=1)
        y = np.empty((self.c_out, cols.shape[1]), dtype=x.dtype)
        np.dot(wb, cols, out=y)
        if training:
            self._cols = cols
            self._shape = (c, n, h, w)
        oh, ow = self.out_hw(h, w)
        return y.reshape(self.c_out, n, oh, ow)

    def backward(self, dy):
        c, n, h, w = self._shape
        dy2 = dy.reshape(self.c_out, -1)
        dwb = dy2 @ self._cols.T  # last column is the bias gradient
        self.dw += dwb[:, :-1].reshape(self.w.shape)
        self.db += dwb[:, -1]
        dcols = self.w.reshape(self.c_out, -1).T @ dy2
        self._cols = None
        return kernels.col2im_add(dcols, c, n, h, w, self.k, self.k,
                                  self.pad, self.pad)


class MaxPool2x2(Layer):
    """2x2 stride-2 max pooling; odd trailing rows/columns are dropped."""

    def __init__(self):
        self._idx = None
        self._shape = None

    def forward(self, x, training):
        out, idx = kernels.maxpool2x2(np.ascontiguousarray(x))
        if training:
            self._idx = idx
            self._shape = x.shape
        return out

    def backward(self, dy):
        h, w = self._shape[2], self._shape[3]
        return kernels.maxpool2x2_backward(np.ascontiguousarray(dy), self._idx, h, w)


class BatchNorm(Layer):
    """Batch normalization; channel axis 0 for 4D input, 1 for 2D.

    Training normalizes with biased batch statistics and updates running
    stats (unbiased variance) with momentum 0.1; inference uses the
    running stats, so per-sample outputs are batch-size independent.
    The transform is applied in fused affine form y = a*x + b and the
    backward pass reconstructs x-hat sums algebraically, avoiding
    whole-activation temporaries.
    """

    def __init__(self, n_features, dtype=np.float32):
        self.gamma = np.ones(n_features, dtype=dtype)
        self.beta = np.zeros(n_features, dtype=dtype)
        self.dgamma = np.zeros_like(self.gamma)
        self.dbeta = np.zeros_like(self.beta)
        self.running_mean = np.zeros(n_features, dtype=dtype)
        self.running_var = np.ones(n_features, dtype=dtype)
        self._cache = None

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def grads(self):
        return {"gamma": self.dgamma, "beta": self.dbeta}

    def state(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    @staticmethod
    def _sums(x, y=None):
        """Per-channel sum of x (or x*y) without materializing temporaries."""
        if x.ndim == 2:
            if y is None:
                return np.einsum("nf->f", x)
            return np.einsum("nf,nf->f", x, y)
        if y is None:
            return np.einsum("cnhw->c", x)
        return np.einsum("cnhw,cnhw->c", x, y)

    @staticmethod
    def _expand(v, ndim):
        return v if ndim == 2 else v.reshape(-1, 1, 1, 1)

    def coefficients(self, x, training):
        """(a, b) of the equivalent per-channel affine y = a*x + b.

        In training mode this computes the batch statistics, updates the
        running stats, and caches what backward() needs.
        """
        m = x.size // (x.shape[1] if x.ndim == 2 else x.shape[0])
        if training:
            s1 = self._sums(x).astype(np.float64)
            sq = self._sums(x, x).astype(np.float64)
            mu = s1 / m
            var = np.maximum(sq / m - mu * mu, 0.0)
            inv = 1.0 / np.sqrt(var + BN_EPS)
            self._cache = (x, mu, inv, m)
            unbiased = var * (m / max(m - 1, 1))
            self.running_mean += BN_MOMENTUM * (mu - self.running_mean).astype(
                self.running_mean.dtype)
            self.running_var += BN_MOMENTUM * (unbiased - self.running_var).astype(
                self.running_var.dtype)
        else:
            mu = self.running_mean.astype(np.float64)
            inv = 1.0 / np.sqrt(self.running_var.astype(np.float64) + BN_EPS)
        a = (self.gamma * inv).astype(x.dtype)
        b = (self.beta - self.gamma * inv * mu).astype(x.dtype)
        return a, b

    def forward(self, x, training):
        a, b = self.coefficients(x, training)
        y = x * self._expand(a, x.ndim)
        y += self._expand(b, x.ndim)
        return y

    def backward(self, dy):
        x, mu, inv, m = self._cache
        s1 = self._sums(dy).astype(np.float64)
        sx = self._sums(dy, x).astype(np.float64)
        s2 = (sx - mu * s1) * inv  # = sum(dy * xhat)
        self.dgamma += s2.astype(self.dgamma.dtype)
        self.dbeta += s1.astype(self.dbeta.dtype)
        g = self.gamma.astype(np.float64) * inv
        c1 = (-g * s1 / m + g * s2 * mu * inv / m).astype(dy.dtype)
        c2 = (-g * s2 * inv / m).astype(dy.dtype)
        g_low = g.astype(dy.dtype)
        if dy.ndim == 4:
            kernels.bn_backward_apply(dy, x, g_low, c2, c1)
        else:
            dy *= g_low
            dy += x * c2
            dy += c1
        return dy
