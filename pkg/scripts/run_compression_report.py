#!/usr/bin/env python3
"""Compress the baseline and sparse activation dumps and print a summary.

Expects the directory layout produced by train_sparse_lenet.py /
`actcomp train-demo`:

    <run>/baseline/{eval,cal}  <run>/sparse/{eval,cal}

    python3 scripts/run_compression_report.py --run runs/demo --q 16
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from actcomp.codecs import CodecTag
from actcomp.pipeline import compress_dump, split_stability, write_report


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--run", required=True, help="train-demo output dir")
    parser.add_argument("--q", type=int, default=16, choices=(8, 12, 16))
    parser.add_argument("--jobs", type=int, default=1)
    args = parser.parse_args()

    run = Path(args.run)
    codecs = [(CodecTag.SEG, None), (CodecTag.EG, None), (CodecTag.ZVC, 0),
              (CodecTag.HUFFMAN, 0)]
    header = f"{'variant':<10} {'codec':<8} {'k':>2} {'total':>8} {'entropy-only':>13}"
    print(header)
    print("-" * len(header))
    for variant in ("baseline", "sparse"):
        out = run / f"out-{variant}-q{args.q}"
        report = compress_dump(
            run / variant / "eval", out, codecs, q=args.q,
            cal_dir=run / variant / "cal", jobs=args.jobs, variant=variant,
        )
        write_report(report, out)
        gains = report.aggregate.gains(report.q)
        for name in report.codec_names:
            k = report.chosen_k.get(name, "")
            print(f"{variant:<10} {name:<8} {k!s:>2} "
                  f"{gains[name]['total']:>7.2f}x "
                  f"{gains[name]['entropy_only']:>12.2f}x")
        full, half, rel = split_stability(report, "seg")
        print(f"{variant:<10} SEG 50% evaluation split: {half:.2f}x "
              f"vs {full:.2f}x (drift {100 * rel:.2f}%)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
