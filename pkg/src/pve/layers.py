"""Network layers: strided same-padding convolution, dense, and activations.

Layers hold their parameters as ``Tensor`` leaves and validate input shapes,
raising ``AutodiffError`` with both shapes named when a mismatch occurs.
Convolutions run in NHWC layout through an im2col + GEMM path.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import AutodiffError, Tensor

__all__ = ["Layer", "ReLU", "Sigmoid", "Flatten", "Dense", "Conv2d", "Network",
           "he_uniform", "xavier_uniform"]


def he_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


def xavier_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


class Layer:
    """Base class; layers expose named parameters for optimizers and I/O."""

    name = "layer"

    def params(self) -> list[tuple[str, Tensor]]:
        return []

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)

    def forward(self, x: Tensor) -> Tensor:
        raise NotImplementedError


class ReLU(Layer):
    name = "relu"

    def forward(self, x: Tensor) -> Tensor:
        return x.relu()

    def __repr__(self):
        return "ReLU()"


class Sigmoid(Layer):
    name = "sigmoid"

    def forward(self, x: Tensor) -> Tensor:
        return x.sigmoid()

    def __repr__(self):
        return "Sigmoid()"


class Flatten(Layer):
    """Collapse all but the leading (batch) axis."""
    name = "flatten"

    def forward(self, x: Tensor) -> Tensor:
        return x.reshape((x.data.shape[0], -1))

    def __repr__(self):
        return "Flatten()"


class Dense(Layer):
    """Affine layer y = x @ W + b for [batch, features] inputs."""

    def __init__(self, in_features: int, out_features: int,
                 rng: np.random.Generator | None = None, init: str = "he",
                 name: str = "dense"):
        self.in_features = in_features
        self.out_features = out_features
        self.name = name
        rng = rng if rng is not None else np.random.default_rng(0)
        if init == "he":
            w = he_uniform(rng, (in_features, out_features), in_features)
        elif init == "xavier":
            w = xavier_uniform(rng, (in_features, out_features), in_features, out_features)
        else:
            raise ValueError(f"unknown init {init!r}")
        self.weight = Tensor(w, requires_grad=True)
        self.bias = Tensor(np.zeros(out_features, dtype=np.float32), requires_grad=True)

    def params(self):
        return [(f"{self.name}.weight", self.weight), (f"{self.name}.bias", self.bias)]

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise AutodiffError(
                f"{self!r}: expected input [batch, {self.in_features}], got {x.shape}"
            )
        return x @ self.weight + self.bias

    def __repr__(self):
        return f"Dense({self.name}, {self.in_features}->{self.out_features})"


def conv_output_size(size: int, stride: int) -> int:
    """Spatial output extent for same-padding convolution (ceiling division)."""
    return -(-size // stride)


def _same_pad(size: int, kernel: int, stride: int) -> tuple[int, int]:
    out = conv_output_size(size, stride)
    total = max((out - 1) * stride + kernel - size, 0)
    lo = total // 2
    return lo, total - lo


class Conv2d(Layer):
    """Same-padding strided convolution on [batch, height, width, channels]."""

    def __init__(self, in_channels: int, out_channels: int, kernel: int = 5,
                 stride: int = 2, rng: np.random.Generator | None = None,
                 name: str = "conv"):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.name = name
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = kernel * kernel * in_channels
        w = he_uniform(rng, (kernel, kernel, in_channels, out_channels), fan_in)
        self.weight = Tensor(w, requires_grad=True)
        self.bias = Tensor(np.zeros(out_channels, dtype=np.float32), requires_grad=True)

    def params(self):
        return [(f"{self.name}.weight", self.weight), (f"{self.name}.bias", self.bias)]

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[3] != self.in_channels:
            raise AutodiffError(
                f"{self!r}: expected input [batch, h, w, {self.in_channels}], got {x.shape}"
            )
        b, h, w_in, _ = x.shape
        k, s = self.kernel, self.stride
        ph = _same_pad(h, k, s)
        pw = _same_pad(w_in, k, s)
        h_out = conv_output_size(h, s)
        w_out = conv_output_size(w_in, s)

        xp = np.pad(x.data, ((0, 0), ph, pw, (0, 0)))
        # [b, h_out, w_out, k, k, cin]
        windows = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::s, ::s]
        windows = windows.transpose(0, 1, 2, 4, 5, 3)
        cols = np.ascontiguousarray(windows, dtype=np.float32).reshape(
            b * h_out * w_out, k * k * self.in_channels)
        wmat = self.weight.data.reshape(k * k * self.in_channels, self.out_channels)
        out = cols @ wmat + self.bias.data
        out = out.reshape(b, h_out, w_out, self.out_channels)

        weight, bias = self.weight, self.bias
        cin, cout = self.in_channels, self.out_channels
        pad_h, pad_w = ph, pw
        hp, wp = xp.shape[1], xp.shape[2]

        def backward(g):
            gf = g.reshape(b * h_out * w_out, cout)
            gw = (cols.T @ gf).reshape(k, k, cin, cout)
            gb = gf.sum(axis=0)
            gcols = (gf @ wmat.T).reshape(b, h_out, w_out, k, k, cin)
            gxp = np.zeros((b, hp, wp, cin), dtype=np.float32)
            for i in range(k):
                for j in range(k):
                    gxp[:, i:i + s * h_out:s, j:j + s * w_out:s, :] += gcols[:, :, :, i, j, :]
            gx = gxp[:, pad_h[0]:hp - pad_h[1], pad_w[0]:wp - pad_w[1], :]
            return ((x, np.ascontiguousarray(gx)), (weight, gw), (bias, gb))

        return Tensor._from_op(out, (x, weight, bias), backward)

    def __repr__(self):
        return (f"Conv2d({self.name}, {self.in_channels}->{self.out_channels}, "
                f"k={self.kernel}, s={self.stride})")


class Network(Layer):
    """A sequential stack of layers with a flat named-parameter view."""

    def __init__(self, layers: list[Layer], name: str = "net"):
        self.layers = list(layers)
        self.name = name

    def params(self):
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def param_tensors(self) -> list[Tensor]:
        return [t for _, t in self.params()]

    def forward(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def zero_grad(self):
        for _, t in self.params():
            t.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.params()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        for name, t in self.params():
            if name not in state:
                raise KeyError(f"missing parameter {name!r} in state dict")
            arr = np.asarray(state[name], dtype=np.float32)
            if arr.shape != t.data.shape:
                raise ValueError(
                    f"parameter {name!r}: shape {arr.shape} does not match {t.data.shape}"
                )
            t.data = arr.copy()

    def __repr__(self):
        inner = ", ".join(repr(l) for l in self.layers)
        return f"Network({self.name}: {inner})"
