"""Sequential network, the sparsity-regularized objective and its gradients.

The training objective is

    mean_n [ data_loss_n + sum_l alpha_l * ||x_{l,n}||_1 ] + weight_decay * sum ||W||^2

where x_l are post-ReLU maps. During backpropagation every regularized map
receives two contributions: the gradient flowing back from the next layer
and the direct L1 subgradient of the penalty, summed before the ReLU gate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, ConsistencyError
from .layers import (
    Conv2D,
    Dense,
    Flatten,
    LayerKind,
    LayerSpec,
    MaxPool,
    ReLU,
    SoftmaxCE,
)


def l1_subgradient(x, alpha: float):
    """Subgradient of alpha * |x|: +alpha, -alpha, or 0 at x = 0."""
    return alpha * np.sign(x)


class Network:
    """Sequential layers ending in a SOFTMAX_CE head."""

    def __init__(self, layers, specs, weight_decay: float, dtype=np.float32):
        if not layers or layers[-1].kind != LayerKind.SOFTMAX_CE:
            raise ConfigError("network must end with a SOFTMAX_CE layer")
        self.layers = layers
        self.specs = specs
        self.weight_decay = weight_decay
        self.dtype = dtype
        self.version = 0  # bumped by sgd_step; guards stale traces
        self._velocity = {}

    def relu_layers(self):
        return [l for l in self.layers if l.kind == LayerKind.RELU]

    def set_alphas(self, alphas: dict[str, float]) -> None:
        known = {l.name for l in self.relu_layers()}
        unknown = set(alphas) - known
        if unknown:
            raise ConfigError(f"alpha given for unknown map(s): {sorted(unknown)}")
        for layer in self.relu_layers():
            layer.alpha = float(alphas.get(layer.name, 0.0))

    def alphas(self) -> dict[str, float]:
        return {l.name: l.alpha for l in self.relu_layers()}

    def weight_square_sum(self) -> float:
        total = 0.0
        for layer in self.layers:
            w = layer.params().get("W")
            if w is not None:
                total += float((w.astype(np.float64) ** 2).sum())
        return total

    def parameters(self):
        """[(layer_index, param_name, array)] over all trainable tensors."""
        out = []
        for i, layer in enumerate(self.layers):
            for name, arr in layer.params().items():
                out.append((i, name, arr))
        return out

    def state_dict(self):
        return {f"{i}.{name}": arr.copy() for i, name, arr in self.parameters()}

    def load_state_dict(self, state) -> None:
        for i, name, arr in self.parameters():
            arr[...] = state[f"{i}.{name}"]
        self.version += 1


@dataclass
class ForwardTrace:
    """Per-layer outputs plus the decomposed objective for one batch."""

    outputs: list
    data_loss: float
    penalty: float
    objective: float
    batch_size: int
    version: int
    relu_maps: dict = field(default_factory=dict)


def forward(net: Network, x: np.ndarray, labels: np.ndarray) -> ForwardTrace:
    """Run the batch through the network and evaluate the full objective."""
    if x.shape[0] != labels.shape[0]:
        raise ConfigError("batch and labels disagree on sample count")
    out = x
    outputs = []
    relu_maps = {}
    penalty = 0.0
    n = x.shape[0]
    for layer in net.layers[:-1]:
        out = layer.forward(out)
        outputs.append(out)
        if layer.kind == LayerKind.RELU:
            relu_maps[layer.name] = out
            if layer.alpha:
                # post-ReLU entries are >= 0, so the L1 norm is a plain sum
                penalty += layer.alpha * float(out.astype(np.float64).sum())
    penalty /= n
    data_loss = net.layers[-1].forward(out, labels)
    objective = data_loss + penalty + net.weight_decay * net.weight_square_sum()
    return ForwardTrace(
        outputs=outputs, data_loss=data_loss, penalty=penalty,
        objective=objective, batch_size=n, version=net.version,
        relu_maps=relu_maps,
    )


def backward(net: Network, trace: ForwardTrace):
    """Gradients of the data + penalty terms for every parameter.

    The weight-decay gradient is applied by sgd_step, not here.
    """
    if trace.version != net.version:
        raise ConsistencyError("trace was computed for different weights")
    g = net.layers[-1].backward()
    n = trace.batch_size
    for i in range(len(net.layers) - 2, -1, -1):
        layer = net.layers[i]
        if layer.kind == LayerKind.RELU and layer.alpha:
            g = g + l1_subgradient(trace.outputs[i], layer.alpha) / n
        g = layer.backward(g)
    return [layer.grads() for layer in net.layers]


def sgd_step(net: Network, grads, lr: float, momentum: float) -> Network:
    """Momentum SGD including the L2 weight-decay term (weights only)."""
    for i, layer in enumerate(net.layers):
        params = layer.params()
        for name, value in params.items():
            g = grads[i][name]
            if name == "W" and net.weight_decay:
                g = g + (2.0 * net.weight_decay) * value
            key = (i, name)
            v = net._velocity.get(key)
            if v is None:
                v = np.zeros_like(value)
                net._velocity[key] = v
            v *= momentum
            v += g
            value -= (lr * v).astype(value.dtype)
    net.version += 1
    return net


def build_network(specs, input_shape, weight_decay=0.0, seed=0,
                  dtype=np.float32) -> Network:
    """Instantiate layers from specs, inferring shapes sequentially."""
    rng = np.random.default_rng(seed)
    shape = tuple(input_shape)  # (H, W, C)
    layers = []
    for spec in specs:
        if spec.kind == LayerKind.CONV2D:
            if len(shape) != 3:
                raise ConfigError(f"{spec.name}: conv needs spatial input")
            layer = Conv2D(spec.name, spec.kernel[0], spec.kernel[1],
                           shape[2], spec.out_channels, rng, dtype)
        elif spec.kind == LayerKind.MAXPOOL:
            layer = MaxPool(spec.name, spec.pool)
        elif spec.kind == LayerKind.DENSE:
            if len(shape) != 1:
                raise ConfigError(f"{spec.name}: dense needs flat input")
            layer = Dense(spec.name, shape[0], spec.units, rng, dtype)
        elif spec.kind == LayerKind.RELU:
            layer = ReLU(spec.name, spec.alpha)
        elif spec.kind == LayerKind.FLATTEN:
            layer = Flatten(spec.name)
        elif spec.kind == LayerKind.SOFTMAX_CE:
            layer = SoftmaxCE(spec.name)
        else:  # pragma: no cover
            raise ConfigError(f"unknown layer kind {spec.kind}")
        shape = layer.out_shape(shape)
        layers.append(layer)
    return Network(layers, list(specs), weight_decay, dtype)


def lenet5_specs(alphas: dict[str, float] | None = None):
    """LeNet-5 style stack for 28x28 grayscale, 10 classes.

    ReLU layers carry the canonical map names (conv1, conv2, fc1, fc2);
    the input and the final classifier are never regularized.
    """
    alphas = alphas or {}
    return [
        LayerSpec(LayerKind.CONV2D, "conv1", kernel=(5, 5), out_channels=6),
        LayerSpec(LayerKind.RELU, "conv1", alpha=alphas.get("conv1", 0.0)),
        LayerSpec(LayerKind.MAXPOOL, "pool1", pool=2),
        LayerSpec(LayerKind.CONV2D, "conv2", kernel=(5, 5), out_channels=16),
        LayerSpec(LayerKind.RELU, "conv2", alpha=alphas.get("conv2", 0.0)),
        LayerSpec(LayerKind.MAXPOOL, "pool2", pool=2),
        LayerSpec(LayerKind.FLATTEN, "flatten"),
        LayerSpec(LayerKind.DENSE, "fc1", units=120),
        LayerSpec(LayerKind.RELU, "fc1", alpha=alphas.get("fc1", 0.0)),
        LayerSpec(LayerKind.DENSE, "fc2", units=84),
        LayerSpec(LayerKind.RELU, "fc2", alpha=alphas.get("fc2", 0.0)),
        LayerSpec(LayerKind.DENSE, "fc3", units=10),
        LayerSpec(LayerKind.SOFTMAX_CE, "loss"),
    ]


def analytic_gradients(net: Network, x, labels):
    """Gradients of the full objective (data + penalty + weight decay)."""
    trace = forward(net, x, labels)
    grads = backward(net, trace)
    full = []
    for i, layer in enumerate(net.layers):
        layer_grads = {}
        for name, value in layer.params().items():
            g = grads[i][name].astype(np.float64)
            if name == "W" and net.weight_decay:
                g = g + (2.0 * net.weight_decay) * value
            layer_grads[name] = g
        full.append(layer_grads)
    return full


def numerical_gradients(net: Network, x, labels, step=1e-6):
    """Central finite differences of the full objective for every parameter.

    Intended for float64 networks; the independent check for backward().
    """
    grads = []
    for i, layer in enumerate(net.layers):
        layer_grads = {}
        for name, arr in layer.params().items():
            g = np.zeros_like(arr, dtype=np.float64)
            flat = arr.reshape(-1)
            gflat = g.reshape(-1)
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + step
                hi = forward(net, x, labels).objective
                flat[j] = orig - step
                lo = forward(net, x, labels).objective
                flat[j] = orig
                gflat[j] = (hi - lo) / (2 * step)
            layer_grads[name] = g
        grads.append(layer_grads)
    return grads
