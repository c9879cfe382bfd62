"""Training loops, checkpoint selection, evaluation and activation dumps."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from ..quantizer import QuantParams, dequantize, quantize
from ..tensorio import ActivationTensor, DType, ManifestEntry, save_tensor, write_manifest
from .layers import LayerKind
from .network import Network, backward, forward, sgd_step


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 5e-4
    epochs: int = 12
    batch_size: int = 64
    seed: int = 0
    lr_decay: float = 0.1
    lr_decay_epochs: tuple[int, ...] = ()
    alphas: dict = field(default_factory=dict)


def parse_config_file(path: str | Path) -> dict:
    """Key-value config: lr, momentum, weight_decay, epochs, batch_size,
    seed, alpha.<layer>. '#' starts a comment; later keys win."""
    out: dict = {"alphas": {}}
    int_keys = {"epochs", "batch_size", "seed"}
    float_keys = {"lr", "momentum", "weight_decay", "lr_decay"}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key.startswith("alpha."):
            out["alphas"][key[len("alpha."):]] = float(value)
        elif key in int_keys:
            out[key] = int(value)
        elif key in float_keys:
            out[key] = float(value)
        else:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
    return out


def config_from_file(path: str | Path, base: TrainConfig | None = None) -> TrainConfig:
    values = parse_config_file(path)
    return replace(base or TrainConfig(), **values)


@dataclass
class EpochStats:
    epoch: int
    top1: float
    nonzero_fraction: float
    objective: float


def write_curve_csv(history: list[EpochStats], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "top1", "nonzero_fraction", "objective"])
        for row in history:
            writer.writerow([row.epoch, f"{row.top1:.6f}",
                             f"{row.nonzero_fraction:.6f}", f"{row.objective:.6f}"])


def _forward_eval(net: Network, x: np.ndarray, hook=None):
    """Inference pass; hook(name, map) may replace each post-ReLU map."""
    out = x
    relu_maps = {}
    for layer in net.layers[:-1]:
        out = layer.forward(out)
        if layer.kind == LayerKind.RELU:
            if hook is not None:
                out = hook(layer.name, out)
            relu_maps[layer.name] = out
    return out, relu_maps


def evaluate(net: Network, x: np.ndarray, labels: np.ndarray,
             batch_size: int = 256, hook=None):
    """Top-1 accuracy plus pooled/per-layer nonzero statistics.

    The pooled nonzero fraction counts every post-ReLU map (the
    regularization-eligible maps); the input is not a computed map and the
    classifier output has no ReLU, so neither participates.
    """
    correct = 0
    nnz = {layer.name: 0 for layer in net.relu_layers()}
    total = dict(nnz)
    for start in range(0, x.shape[0], batch_size):
        xb = x[start:start + batch_size]
        yb = labels[start:start + batch_size]
        logits, relu_maps = _forward_eval(net, xb, hook=hook)
        correct += int((logits.argmax(axis=1) == yb).sum())
        for name, m in relu_maps.items():
            nnz[name] += int(np.count_nonzero(m))
            total[name] += m.size
    pooled = sum(nnz.values()) / max(sum(total.values()), 1)
    per_layer = {name: (nnz[name], total[name]) for name in nnz}
    return correct / x.shape[0], pooled, per_layer


def evaluate_quantized(net: Network, x: np.ndarray, labels: np.ndarray,
                       params: dict[str, QuantParams], batch_size: int = 256):
    """Top-1 with every post-ReLU map passed through quantize/dequantize."""
    missing = {l.name for l in net.relu_layers()} - set(params)
    if missing:
        raise ConfigError(f"missing quantization params for {sorted(missing)}")

    def hook(name, m):
        p = params[name]
        return dequantize(quantize(m, p), p).astype(net.dtype)

    top1, _, _ = evaluate(net, x, labels, batch_size=batch_size, hook=hook)
    return top1


def train(net: Network, train_x, train_y, val_x, val_y,
          cfg: TrainConfig) -> list[EpochStats]:
    """Plain epoch loop; returns per-epoch accuracy/sparsity/objective."""
    rng = np.random.default_rng(cfg.seed)
    n = train_x.shape[0]
    history = []
    lr = cfg.lr
    for epoch in range(1, cfg.epochs + 1):
        if epoch - 1 in cfg.lr_decay_epochs:
            lr *= cfg.lr_decay
        order = rng.permutation(n)
        objective_sum = 0.0
        batches = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            trace = forward(net, train_x[idx], train_y[idx])
            grads = backward(net, trace)
            sgd_step(net, grads, lr, cfg.momentum)
            objective_sum += trace.objective
            batches += 1
        top1, pooled, _ = evaluate(net, val_x, val_y)
        history.append(EpochStats(epoch, top1, pooled, objective_sum / batches))
    return history


@dataclass
class FinetuneResult:
    history: list
    best_epoch: int
    best_top1: float
    best_nonzero: float
    fallback_used: bool


def finetune(net: Network, train_x, train_y, val_x, val_y, alphas: dict,
             cfg: TrainConfig, baseline_top1: float,
             accuracy_slack: float = 0.001) -> FinetuneResult:
    """Fine-tune with the L1 activation prior and select a checkpoint.

    Checkpoint rule: among epochs whose validation top-1 stays within
    accuracy_slack (absolute) of the baseline, pick the lowest pooled
    nonzero fraction; if no epoch qualifies, fall back to the highest
    accuracy. The selected weights are restored into net.
    """
    net.set_alphas(alphas)
    rng = np.random.default_rng(cfg.seed + 1)
    n = train_x.shape[0]
    history = []
    best = None  # (nonzero, epoch, state)
    fallback = None  # (-top1, epoch, state)
    lr = cfg.lr
    for epoch in range(1, cfg.epochs + 1):
        if epoch - 1 in cfg.lr_decay_epochs:
            lr *= cfg.lr_decay
        order = rng.permutation(n)
        objective_sum = 0.0
        batches = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            trace = forward(net, train_x[idx], train_y[idx])
            grads = backward(net, trace)
            sgd_step(net, grads, lr, cfg.momentum)
            objective_sum += trace.objective
            batches += 1
        top1, pooled, _ = evaluate(net, val_x, val_y)
        history.append(EpochStats(epoch, top1, pooled, objective_sum / batches))
        if top1 >= baseline_top1 - accuracy_slack:
            if best is None or pooled < best[0]:
                best = (pooled, epoch, net.state_dict())
        if fallback is None or top1 > -fallback[0]:
            fallback = (-top1, epoch, net.state_dict())
    fallback_used = best is None
    chosen = fallback if fallback_used else best
    net.load_state_dict(chosen[2])
    picked = history[chosen[1] - 1]
    return FinetuneResult(
        history=history, best_epoch=chosen[1], best_top1=picked.top1,
        best_nonzero=picked.nonzero_fraction, fallback_used=fallback_used,
    )


def speedup(baseline_nnz: float, sparse_nnz: float, convention: str = "RATIO") -> float:
    """Zero-skipping speed-up proxy from nonzero activation counts."""
    if convention == "RATIO":
        if sparse_nnz == 0:
            return math.inf
        return baseline_nnz / sparse_nnz
    if convention == "PERCENT":
        return 1.0 - sparse_nnz / baseline_nnz
    raise ConfigError(f"unknown speed-up convention {convention!r}")


def dump_activations(net: Network, x: np.ndarray, out_dir: str | Path,
                     role: str, batch_size: int = 250) -> Path:
    """Write every post-ReLU map as float32 AMC1 files plus a manifest.

    One file per (layer, batch); dense maps get dims (n, 1, 1, features).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for b, start in enumerate(range(0, x.shape[0], batch_size)):
        xb = x[start:start + batch_size]
        _, relu_maps = _forward_eval(net, xb)
        for name, m in relu_maps.items():
            if m.ndim == 2:
                dims = (m.shape[0], 1, 1, m.shape[1])
            else:
                dims = m.shape
            t = ActivationTensor(
                layer_name=name, dims=dims, dtype=DType.F32,
                data=np.ascontiguousarray(m, dtype=np.float32).reshape(dims),
            )
            fname = f"{name}_{role}_{b:03d}.amc1"
            save_tensor(t, out_dir / fname)
            entries.append(ManifestEntry(path=fname, layer=name, batch=b, role=role))
    return write_manifest(entries, out_dir)
