"""Desk-scale end-to-end experiment: train, sparsify, dump activations.

This is what the `train-demo` CLI subcommand and the experiment scripts
run. It produces, under one output directory:

    baseline/eval, baseline/cal     float32 activation dumps + manifests
    sparse/eval,   sparse/cal
    baseline_curve.csv, sparse_curve.csv
    metrics.json                    accuracy/sparsity/speed-up summary
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .sparsetrain import (
    TrainConfig,
    build_network,
    dump_activations,
    evaluate,
    finetune,
    lenet5_specs,
    make_synthetic_bundle,
    speedup,
    train,
)
from .sparsetrain.data import DataBundle, load_idx_bundle
from .sparsetrain.train import write_curve_csv

# Default per-layer L1 weights for the LeNet-style model; the first conv
# gets the gentlest pressure, the first dense layer the strongest. The
# unlisted maps stay unregularized.
DEFAULT_ALPHAS = {"conv1": 0.25e-5, "conv2": 2e-5, "fc1": 5e-5}


@dataclass(frozen=True)
class DeskDemoConfig:
    out_dir: str
    seed: int = 0
    n_train: int = 6000
    n_val: int = 1000
    n_test: int = 2000
    n_cal: int = 1000
    batch_size: int = 64
    weight_decay: float = 5e-4
    baseline_epochs: int = 8
    baseline_lr: float = 0.01
    finetune_epochs: int = 100
    finetune_lr: float = 0.05
    finetune_decay_epochs: tuple[int, ...] = (80, 92)
    lr_decay: float = 0.2
    accuracy_slack: float = 0.001
    alphas: dict = field(default_factory=lambda: dict(DEFAULT_ALPHAS))
    idx_dir: str | None = None
    dump_batch: int = 250


@dataclass
class DeskDemoResult:
    metrics: dict
    net: object  # the selected sparse network
    bundle: DataBundle
    out_dir: Path


def _per_layer_fractions(per_layer: dict) -> dict:
    return {name: nnz / total for name, (nnz, total) in per_layer.items()}


def run_desk_demo(cfg: DeskDemoConfig) -> DeskDemoResult:
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if cfg.idx_dir:
        bundle = load_idx_bundle(cfg.idx_dir, n_val=cfg.n_val, n_cal=cfg.n_cal,
                                 seed=cfg.seed)
    else:
        bundle = make_synthetic_bundle(cfg.n_train, cfg.n_val, cfg.n_test,
                                       cfg.n_cal, seed=cfg.seed)

    net = build_network(lenet5_specs(), (28, 28, 1),
                        weight_decay=cfg.weight_decay, seed=cfg.seed + 1)
    base_cfg = TrainConfig(
        lr=cfg.baseline_lr, epochs=cfg.baseline_epochs, seed=cfg.seed,
        batch_size=cfg.batch_size, weight_decay=cfg.weight_decay,
        lr_decay_epochs=(max(cfg.baseline_epochs - 2, 1),), lr_decay=0.1,
    )
    base_hist = train(net, bundle.train_x, bundle.train_y,
                      bundle.val_x, bundle.val_y, base_cfg)
    write_curve_csv(base_hist, out_dir / "baseline_curve.csv")
    base_top1, base_nz, base_layers = evaluate(net, bundle.test_x, bundle.test_y)
    dump_activations(net, bundle.test_x, out_dir / "baseline" / "eval",
                     role="eval", batch_size=cfg.dump_batch)
    dump_activations(net, bundle.cal_x, out_dir / "baseline" / "cal",
                     role="cal", batch_size=cfg.dump_batch)

    ft_cfg = TrainConfig(
        lr=cfg.finetune_lr, epochs=cfg.finetune_epochs, seed=cfg.seed,
        batch_size=cfg.batch_size, weight_decay=cfg.weight_decay,
        lr_decay_epochs=cfg.finetune_decay_epochs, lr_decay=cfg.lr_decay,
    )
    ft = finetune(net, bundle.train_x, bundle.train_y, bundle.val_x,
                  bundle.val_y, cfg.alphas, ft_cfg, baseline_top1=base_top1,
                  accuracy_slack=cfg.accuracy_slack)
    write_curve_csv(ft.history, out_dir / "sparse_curve.csv")
    sparse_top1, sparse_nz, sparse_layers = evaluate(net, bundle.test_x,
                                                     bundle.test_y)
    dump_activations(net, bundle.test_x, out_dir / "sparse" / "eval",
                     role="eval", batch_size=cfg.dump_batch)
    dump_activations(net, bundle.cal_x, out_dir / "sparse" / "cal",
                     role="cal", batch_size=cfg.dump_batch)

    metrics = {
        "seed": cfg.seed,
        "alphas": cfg.alphas,
        "baseline": {
            "top1": base_top1,
            "nonzero_fraction": base_nz,
            "per_layer": _per_layer_fractions(base_layers),
        },
        "sparse": {
            "top1": sparse_top1,
            "nonzero_fraction": sparse_nz,
            "per_layer": _per_layer_fractions(sparse_layers),
            "selected_epoch": ft.best_epoch,
            "fallback_checkpoint": ft.fallback_used,
        },
        "speedup_ratio": speedup(base_nz, sparse_nz, "RATIO"),
        "speedup_percent": speedup(base_nz, sparse_nz, "PERCENT"),
        "accuracy_change": sparse_top1 - base_top1,
    }
    with open(out_dir / "metrics.json", "w", encoding="utf-8") as fh:
        json.dump(metrics, fh, indent=2)
        fh.write("\n")
    return DeskDemoResult(metrics=metrics, net=net, bundle=bundle,
                          out_dir=out_dir)
