"""The three-path correction network and its configuration.

A convolutional path digests the 1x128x64 stacked top/side render, a
dense path digests the 10 numeric features, and a prediction head maps
their concatenation to the scalar link-budget correction (dB).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericError
from .layers import BatchNorm, Conv2d, Linear, ReLU


@dataclass(frozen=True)
class ArchitectureConfig:
    cnn_filters: tuple = (32, 16, 16, 16, 10, 1)
    kernels: tuple = (5, 3, 3, 3, 3, 2)
    pools: tuple = (2, 2, 2, 2, 2, 2)
    padding: int = 3
    stride: int = 1
    dilation: int = 1
    feature_nn: tuple = (256, 128, 64, 32)
    prediction_nn: tuple = (16,)
    cnn_flatten_out: int = 32
    input_image: tuple = (1, 128, 64)
    input_features: int = 10

    def __post_init__(self):
        if not (len(self.cnn_filters) == len(self.kernels) == len(self.pools)):
            raise ValueError("cnn_filters, kernels, pools must have equal length")
        if self.stride != 1 or self.dilation != 1:
            raise ValueError("only stride 1 / dilation 1 convolutions are supported")
        if any(p != 2 for p in self.pools):
            raise ValueError("only 2x2 max pooling is supported")
        if min(self.cnn_filters) < 1 or min(self.feature_nn) < 1 or min(self.prediction_nn) < 1:
            raise ValueError("layer widths must be >= 1")

    def shape_chain(self):
        """Spatial dims after each conv+pool block: [(h, w), ...]."""
        _, h, w = self.input_image
        chain = []
        for k in self.kernels:
            h = h + 2 * self.padding - k + 1
            w = w + 2 * self.padding - k + 1
            h //= 2
            w //= 2
            chain.append((h, w))
        return chain

    def cnn_flat_in(self):
        h, w = self.shape_chain()[-1]
        return self.cnn_filters[-1] * h * w

    def to_dict(self):
        return {
            "cnn_filters": list(self.cnn_filters),
            "kernels": list(self.kernels),
            "pools": list(self.pools),
            "padding": self.padding,
            "stride": self.stride,
            "dilation": self.dilation,
            "feature_nn": list(self.feature_nn),
            "prediction_nn": list(self.prediction_nn),
            "cnn_flatten_out": self.cnn_flatten_out,
            "input_image": list(self.input_image),
            "input_features": self.input_features,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            cnn_filters=tuple(d["cnn_filters"]),
            kernels=tuple(d["kernels"]),
            pools=tuple(d["pools"]),
            padding=int(d["padding"]),
            stride=int(d["stride"]),
            dilation=int(d["dilation"]),
            feature_nn=tuple(d["feature_nn"]),
            prediction_nn=tuple(d["prediction_nn"]),
            cnn_flatten_out=int(d["cnn_flatten_out"]),
            input_image=tuple(d["input_image"]),
            input_features=int(d["input_features"]),
        )


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    weight_decay: float = 0.0005
    batch_size: int = 128
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_epochs: int = 100
    early_stop_patience: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("learning_rate, batch_size, max_epochs must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")


class _ConvBlock:
    """conv -> ReLU -> batchnorm -> 2x2 max pool.

    The batchnorm affine and the pooling run as one fused kernel pass
    (the affine is monotone per channel, so pooling can select on the
    raw values); results equal the unfused layer composition exactly.
    """

    def __init__(self, c_in, c_out, kernel, padding, rng, dtype):
        self.conv = Conv2d(c_in, c_out, kernel, padding, rng, dtype)
        self.relu = ReLU()
        self.bn = BatchNorm(c_out, dtype)
        self.sub = {"conv": self.conv, "bn": self.bn}
        self._idx = None
        self._hw = None

    def forward(self, x, training):
        from .. import kernels

        x = self.conv.forward(x, training)
        x = self.relu.forward(x, training)
        a, b = self.bn.coefficients(x, training)
        out, idx = kernels.affine_pool2x2(x, a, b)
        if training:
            self._idx = idx
            self._hw = (x.shape[2], x.shape[3])
        return out

    def backward(self, dy):
        from .. import kernels

        h, w = self._hw
        dy = kernels.maxpool2x2_backward(np.ascontiguousarray(dy), self._idx, h, w)
        dy = self.bn.backward(dy)
        dy = self.relu.backward(dy)
        return self.conv.backward(dy)


class _DenseBlock:
    """linear -> ReLU -> batchnorm."""

    def __init__(self, n_in, n_out, rng, dtype):
        self.linear = Linear(n_in, n_out, rng, dtype)
        self.relu = ReLU()
        self.bn = BatchNorm(n_out, dtype)
        self.sub = {"linear": self.linear, "bn": self.bn}

    def forward(self, x, training):
        x = self.linear.forward(x, training)
        x = self.relu.forward(x, training)
        return self.bn.forward(x, training)

    def backward(self, dy):
        dy = self.bn.backward(dy)
        dy = self.relu.backward(dy)
        return self.linear.backward(dy)


class Model:
    """Assembled network; construction order fixes the parameter layout."""

    def __init__(self, arch: ArchitectureConfig, seed: int, dtype=np.float32):
        self.arch = arch
        self.dtype = np.dtype(dtype).type
        rng = np.random.default_rng(seed)

        c_prev = arch.input_image[0]
        self.cnn_blocks = []
        for c_out, k in zip(arch.cnn_filters, arch.kernels):
            self.cnn_blocks.append(_ConvBlock(c_prev, c_out, k, arch.padding, rng, dtype))
            c_prev = c_out
        self.cnn_head = Linear(arch.cnn_flat_in(), arch.cnn_flatten_out, rng, dtype)

        self.feat_blocks = []
        f_prev = arch.input_features
        for width in arch.feature_nn:
            self.feat_blocks.append(_DenseBlock(f_prev, width, rng, dtype))
            f_prev = width

        concat = arch.cnn_flatten_out + arch.feature_nn[-1]
        self.pred_layers = []
        p_prev = concat
        for width in arch.prediction_nn:
            self.pred_layers.append(Linear(p_prev, width, rng, dtype))
            self.pred_layers.append(ReLU())
            p_prev = width
        self.pred_layers.append(Linear(p_prev, 1, rng, dtype))

        self._feat_width = arch.feature_nn[-1]

    # -- layer registry ----------------------------------------------------

    def named_layers(self):
        out = []
        for i, blk in enumerate(self.cnn_blocks):
            for sub, layer in blk.sub.items():
                out.append((f"cnn.{i}.{sub}", layer))
        out.append(("cnn.head", self.cnn_head))
        for i, blk in enumerate(self.feat_blocks):
            for sub, layer in blk.sub.items():
                out.append((f"feat.{i}.{sub}", layer))
        j = 0
        for layer in self.pred_layers:
            if isinstance(layer, Linear):
                out.append((f"pred.{j}", layer))
                j += 1
        return out

    def params(self):
        flat = {}
        for name, layer in self.named_layers():
            for pname, arr in layer.params().items():
                flat[f"{name}.{pname}"] = arr
        return flat

    def grads(self):
        flat = {}
        for name, layer in self.named_layers():
            for pname, arr in layer.grads().items():
                flat[f"{name}.{pname}"] = arr
        return flat

    def state(self):
        flat = {}
        for name, layer in self.named_layers():
            for sname, arr in layer.state().items():
                flat[f"{name}.{sname}"] = arr
        return flat

    def zero_grads(self):
        for _, layer in self.named_layers():
            layer.zero_grads()

    # -- forward / backward --------------------------------------------------

    def forward(self, images, feats, training=False, check=False):
        """images: (N, C, H, W); feats: (N, n_features) normalized.

        Returns (N,) corrections in dB. `check` validates finiteness after
        every layer and reports the offender (slow; used for diagnosis).
        """
        images = np.ascontiguousarray(images, dtype=self.dtype)
        feats = np.ascontiguousarray(feats, dtype=self.dtype)
        if images.ndim != 4 or images.shape[1:] != tuple(self.arch.input_image):
            raise ValueError(
                f"expected images (N, {self.arch.input_image}), got {images.shape}")
        if feats.ndim != 2 or feats.shape[1] != self.arch.input_features:
            raise ValueError(
                f"expected features (N, {self.arch.input_features}), got {feats.shape}")

        # channel-major layout through the conv stack (free for one channel)
        a = np.ascontiguousarray(images.transpose(1, 0, 2, 3))
        for i, blk in enumerate(self.cnn_blocks):
            a = blk.forward(a, training)
            if check and not np.isfinite(a).all():
                raise NumericError(f"non-finite activation after cnn.{i}")
        a = np.ascontiguousarray(a.transpose(1, 0, 2, 3)).reshape(a.shape[1], -1)
        a = self.cnn_head.forward(a, training)

        f = feats
        for i, blk in enumerate(self.feat_blocks):
            f = blk.forward(f, training)
            if check and not np.isfinite(f).all():
                raise NumericError(f"non-finite activation after feat.{i}")

        h = np.concatenate([a, f], axis=1)
        for layer in self.pred_layers:
            h = layer.forward(h, training)
        out = h[:, 0]
        if check and not np.isfinite(out).all():
            raise NumericError("non-finite activation after prediction head")
        return out

    def backward(self, dout):
        """dout: (N,) gradient of the loss w.r.t. the scalar output."""
        h = np.ascontiguousarray(dout, dtype=self.dtype)[:, None]
        for layer in reversed(self.pred_layers):
            h = layer.backward(h)
        da = h[:, :self.arch.cnn_flatten_out]
        df = h[:, self.arch.cnn_flatten_out:]

        for blk in reversed(self.feat_blocks):
            df = blk.backward(df)

        da = self.cnn_head.backward(da)
        n = da.shape[0]
        c = self.arch.cnn_filters[-1]
        hh, ww = self.arch.shape_chain()[-1]
        da = np.ascontiguousarray(
            da.reshape(n, c, hh, ww).transpose(1, 0, 2, 3))
        for blk in reversed(self.cnn_blocks):
            da = blk.backward(da)
        return da

    def astype(self, dtype):
        """Convert parameters and running stats in place (for verification)."""
        self.dtype = np.dtype(dtype).type
        for _, layer in self.named_layers():
            for name, arr in layer.params().items():
                setattr(layer, name, arr.astype(dtype))
            for name, arr in layer.grads().items():
                setattr(layer, "d" + name, arr.astype(dtype))
            for name, arr in layer.state().items():
                setattr(layer, name, arr.astype(dtype))
        return self
