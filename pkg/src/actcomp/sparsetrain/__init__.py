"""Desk-scale trainer with an L1 sparsity prior on post-ReLU activation maps."""

from .layers import LayerKind, LayerSpec
from .network import (
    ForwardTrace,
    Network,
    analytic_gradients,
    backward,
    build_network,
    forward,
    l1_subgradient,
    lenet5_specs,
    numerical_gradients,
    sgd_step,
)
from .data import DataBundle, generate_digits, make_synthetic_bundle
from .train import (
    TrainConfig,
    dump_activations,
    evaluate,
    evaluate_quantized,
    finetune,
    speedup,
    train,
)

__all__ = [
    "DataBundle",
    "ForwardTrace",
    "LayerKind",
    "LayerSpec",
    "Network",
    "TrainConfig",
    "analytic_gradients",
    "backward",
    "build_network",
    "dump_activations",
    "evaluate",
    "evaluate_quantized",
    "finetune",
    "forward",
    "generate_digits",
    "l1_subgradient",
    "lenet5_specs",
    "make_synthetic_bundle",
    "numerical_gradients",
    "sgd_step",
    "speedup",
    "train",
]
