#!/usr/bin/env python3
"""Plot per-layer nonzero percentage and compression gain from report.json.

    python3 scripts/plot_report.py --report runs/demo/out-sparse-q16/report.json \
        --out runs/demo/sparse_layers.png
"""

import argparse
import json
import sys
from pathlib import Path


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--report", required=True, help="report.json path")
    parser.add_argument("--out", required=True, help="output image path")
    args = parser.parse_args()

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    payload = json.loads(Path(args.report).read_text())
    series = payload["series"]
    layers = series["layers"]
    xs = range(len(layers))

    fig, (top, bottom) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    top.bar(xs, series["nonzero_pct"], color="#4477aa")
    top.set_ylabel("nonzero activations (%)")
    top.set_title(f"{payload['variant']} at q={payload['q']}")
    for name, gains in series["total_gain"].items():
        bottom.plot(xs, gains, marker="o", label=name)
    bottom.set_ylabel("total compression gain (x)")
    bottom.set_xticks(list(xs), layers)
    bottom.legend()
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
