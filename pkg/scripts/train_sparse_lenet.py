#!/usr/bin/env python3
"""Desk-scale sparsification experiment.

Trains the LeNet-style baseline on the bundled synthetic digits (or an
IDX dataset), fine-tunes it with the per-layer L1 activation prior, and
dumps calibration/evaluation activation maps for the compression stage.

    python3 scripts/train_sparse_lenet.py --out runs/demo
    python3 scripts/train_sparse_lenet.py --out runs/mnist --idx-dir data/mnist
"""

import argparse
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from actcomp.experiment import DeskDemoConfig, run_desk_demo


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--idx-dir", default=None)
    parser.add_argument("--train-size", type=int, default=6000)
    parser.add_argument("--finetune-epochs", type=int, default=100)
    args = parser.parse_args()

    cfg = DeskDemoConfig(
        out_dir=args.out, seed=args.seed, idx_dir=args.idx_dir,
        n_train=args.train_size, finetune_epochs=args.finetune_epochs,
    )
    result = run_desk_demo(cfg)
    print(json.dumps(result.metrics, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
