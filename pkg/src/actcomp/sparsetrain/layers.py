"""Layer primitives over N,H,W,C arrays with explicit backward passes."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError


class LayerKind(enum.Enum):
    CONV2D = "conv2d"
    MAXPOOL = "maxpool"
    DENSE = "dense"
    RELU = "relu"
    FLATTEN = "flatten"
    SOFTMAX_CE = "softmax_ce"


@dataclass(frozen=True)
class LayerSpec:
    """Declarative layer description used to build a network.

    alpha is the L1 regularization weight applied to the post-ReLU output
    of a RELU layer; it must stay 0 everywhere else.
    """

    kind: LayerKind
    name: str
    kernel: tuple[int, int] = (0, 0)
    out_channels: int = 0
    units: int = 0
    pool: int = 2
    alpha: float = 0.0

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise ConfigError("alpha must be non-negative")
        if self.alpha and self.kind != LayerKind.RELU:
            raise ConfigError("alpha applies to RELU layers only")


class Conv2D:
    """Valid-padding stride-1 convolution via im2col."""

    kind = LayerKind.CONV2D

    def __init__(self, name, kh, kw, c_in, c_out, rng, dtype):
        self.name = name
        self.kh, self.kw, self.c_in, self.c_out = kh, kw, c_in, c_out
        std = np.sqrt(2.0 / (kh * kw * c_in))
        self.W = (rng.standard_normal((kh, kw, c_in, c_out)) * std).astype(dtype)
        self.b = np.zeros(c_out, dtype=dtype)
        self._cols = None
        self._x_shape = None

    def forward(self, x):
        n, h, w, _ = x.shape
        if h < self.kh or w < self.kw or x.shape[3] != self.c_in:
            raise ConfigError(f"{self.name}: input shape {x.shape} incompatible")
        win = np.lib.stride_tricks.sliding_window_view(x, (self.kh, self.kw), axis=(1, 2))
        # (N, H', W', C, kh, kw) -> (N, H', W', kh, kw, C) to match W's layout
        cols = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3))
        cols = cols.reshape(n, h - self.kh + 1, w - self.kw + 1, -1)
        self._cols = cols
        self._x_shape = x.shape
        return cols @ self.W.reshape(-1, self.c_out) + self.b

    def backward(self, dy):
        n, ho, wo, _ = dy.shape
        k = self.kh * self.kw * self.c_in
        cols2 = self._cols.reshape(-1, k)
        dy2 = dy.reshape(-1, self.c_out)
        self.dW = (cols2.T @ dy2).reshape(self.W.shape)
        self.db = dy2.sum(axis=0)
        dcols = (dy2 @ self.W.reshape(-1, self.c_out).T).reshape(
            n, ho, wo, self.kh, self.kw, self.c_in)
        dx = np.zeros(self._x_shape, dtype=dy.dtype)
        for i in range(self.kh):
            for j in range(self.kw):
                dx[:, i:i + ho, j:j + wo, :] += dcols[:, :, :, i, j, :]
        return dx

    def params(self):
        return {"W": self.W, "b": self.b}

    def grads(self):
        return {"W": self.dW, "b": self.db}

    def out_shape(self, in_shape):
        h, w, _ = in_shape
        return (h - self.kh + 1, w - self.kw + 1, self.c_out)


class MaxPool:
    """Non-overlapping max pooling; window == stride."""

    kind = LayerKind.MAXPOOL

    def __init__(self, name, pool):
        self.name = name
        self.pool = pool
        self._idx = None
        self._x_shape = None

    def forward(self, x):
        p = self.pool
        n, h, w, c = x.shape
        if h % p or w % p:
            raise ConfigError(f"{self.name}: dims {h}x{w} not divisible by {p}")
        win = x.reshape(n, h // p, p, w // p, p, c).transpose(0, 1, 3, 5, 2, 4)
        win = win.reshape(n, h // p, w // p, c, p * p)
        self._idx = win.argmax(axis=-1)
        self._x_shape = x.shape
        return np.take_along_axis(win, self._idx[..., None], axis=-1)[..., 0]

    def backward(self, dy):
        p = self.pool
        n, h, w, c = self._x_shape
        dwin = np.zeros((n, h // p, w // p, c, p * p), dtype=dy.dtype)
        np.put_along_axis(dwin, self._idx[..., None], dy[..., None], axis=-1)
        dwin = dwin.reshape(n, h // p, w // p, c, p, p)
        return dwin.transpose(0, 1, 4, 2, 5, 3).reshape(n, h, w, c)

    def params(self):
        return {}

    def grads(self):
        return {}

    def out_shape(self, in_shape):
        h, w, c = in_shape
        return (h // self.pool, w // self.pool, c)


class Dense:
    kind = LayerKind.DENSE

    def __init__(self, name, n_in, n_out, rng, dtype):
        self.name = name
        std = np.sqrt(2.0 / n_in)
        self.W = (rng.standard_normal((n_in, n_out)) * std).astype(dtype)
        self.b = np.zeros(n_out, dtype=dtype)
        self._x = None

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.W.shape[0]:
            raise ConfigError(f"{self.name}: input shape {x.shape} incompatible")
        self._x = x
        return x @ self.W + self.b

    def backward(self, dy):
        self.dW = self._x.T @ dy
        self.db = dy.sum(axis=0)
        return dy @ self.W.T

    def params(self):
        return {"W": self.W, "b": self.b}

    def grads(self):
        return {"W": self.dW, "b": self.db}

    def out_shape(self, in_shape):
        return (self.W.shape[1],)


class ReLU:
    """Rectifier whose output is the activation map the toolkit targets."""

    kind = LayerKind.RELU

    def __init__(self, name, alpha=0.0):
        self.name = name
        self.alpha = alpha
        self._mask = None

    def forward(self, y):
        self._mask = y > 0
        return np.maximum(y, 0)

    def backward(self, dx):
        return dx * self._mask

    def params(self):
        return {}

    def grads(self):
        return {}

    def out_shape(self, in_shape):
        return in_shape


class Flatten:
    kind = LayerKind.FLATTEN

    def __init__(self, name):
        self.name = name
        self._x_shape = None

    def forward(self, x):
        self._x_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._x_shape)

    def params(self):
        return {}

    def grads(self):
        return {}

    def out_shape(self, in_shape):
        size = 1
        for d in in_shape:
            size *= d
        return (size,)


class SoftmaxCE:
    """Softmax + cross-entropy head; forward returns the mean data loss."""

    kind = LayerKind.SOFTMAX_CE

    def __init__(self, name):
        self.name = name
        self._probs = None
        self._labels = None

    def forward(self, logits, labels):
        z = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(z)
        self._probs = e / e.sum(axis=1, keepdims=True)
        self._labels = labels
        picked = self._probs[np.arange(labels.size), labels]
        return float(-np.log(np.maximum(picked, 1e-300)).mean())

    def backward(self):
        n = self._labels.size
        g = self._probs.copy()
        g[np.arange(n), self._labels] -= 1.0
        return g / n

    def params(self):
        return {}

    def grads(self):
        return {}

    def out_shape(self, in_shape):
        return in_shape
