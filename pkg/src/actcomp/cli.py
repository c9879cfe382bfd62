"""Command-line surface.

Exit codes: 0 success, 2 usage error, 3 data/format error, 4 round-trip
verification failure. Randomness is seeded from --seed, the AMC_SEED
environment variable, or the config file, in that precedence order.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .codecs import BLOB_VERSION, CodecTag
from .errors import ActcompError, ConfigError, CorruptionError, FormatError
from .pipeline import (
    calibrate_dump,
    compress_dump,
    decompress_dump,
    histogram_report,
    search_k_dump,
    split_stability,
    write_report,
)
from .tensorio import VERSION as CONTAINER_VERSION
from .tensorio import iter_dump

_FORMATS_NOTE = (
    f"formats: AMC1 tensor container v{CONTAINER_VERSION}, "
    f"SEGB blob container v{BLOB_VERSION}"
)

_CODEC_TAGS = {t.name.lower(): t for t in CodecTag}


def _resolve_seed(args, file_cfg_seed=None) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("AMC_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"AMC_SEED must be an integer, got {env!r}") from exc
    if file_cfg_seed is not None:
        return file_cfg_seed
    return 0


def _parse_codecs(spec: str, k_arg: str):
    """--codec seg,eg,zvc --k auto|N -> [(CodecTag, k-or-None), ...]"""
    out = []
    for name in spec.split(","):
        name = name.strip().lower()
        if name not in _CODEC_TAGS:
            raise ConfigError(
                f"unknown codec {name!r}; choose from {sorted(_CODEC_TAGS)}"
            )
        tag = _CODEC_TAGS[name]
        if tag in (CodecTag.EG, CodecTag.SEG):
            out.append((tag, None if k_arg == "auto" else int(k_arg)))
        else:
            out.append((tag, 0))
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="actcomp",
        description="Sparsify, quantize and entropy-code CNN activation maps.",
        epilog=_FORMATS_NOTE,
    )
    parser.add_argument("--version", action="version",
                        version=f"actcomp {__version__} ({_FORMATS_NOTE})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-demo", epilog=_FORMATS_NOTE,
                       help="train the desk-scale model, sparsify it and dump "
                            "activation maps")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="key=value training config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--idx-dir", help="directory with IDX image/label files "
                                     "(default: bundled synthetic digits)")
    p.add_argument("--train-size", type=int, default=6000)
    p.add_argument("--val-size", type=int, default=1000)
    p.add_argument("--test-size", type=int, default=2000)
    p.add_argument("--cal-size", type=int, default=1000)
    p.add_argument("--baseline-epochs", type=int, default=8)
    p.add_argument("--finetune-epochs", type=int, default=100)
    p.add_argument("--quick", action="store_true",
                   help="tiny smoke-test schedule")

    p = sub.add_parser("stats", epilog=_FORMATS_NOTE,
                       help="per-layer nonzero fractions of a dump")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("quantize", epilog=_FORMATS_NOTE,
                       help="quantize a float dump with calibrated maxima")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--q", type=int, required=True, choices=(8, 12, 16))
    p.add_argument("--train-manifest", required=True,
                   help="calibration dump directory")

    p = sub.add_parser("search-k", epilog=_FORMATS_NOTE,
                       help="pick the EG/SEG order on a training dump")
    p.add_argument("--train-manifest", required=True)
    p.add_argument("--codec", required=True, choices=("eg", "seg"))
    p.add_argument("--q", type=int, required=True, choices=(8, 12, 16))

    p = sub.add_parser("compress", epilog=_FORMATS_NOTE,
                       help="quantize + encode a dump, verify, write report")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--codec", default="seg",
                   help="comma-separated: seg,eg,zvc,huffman,raw")
    p.add_argument("--q", type=int, required=True, choices=(8, 12, 16))
    p.add_argument("--k", default="auto",
                   help="EG/SEG order or 'auto' (searched on --train-manifest)")
    p.add_argument("--train-manifest",
                   help="calibration dump (required for float inputs or k=auto)")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--no-zlib", action="store_true",
                   help="skip the zlib comparison column")
    p.add_argument("--variant", default="model")
    p.add_argument("--stability-check", action="store_true",
                   help="also report the 50%% evaluation-split gain drift")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("decompress", epilog=_FORMATS_NOTE,
                       help="decode blobs; optionally verify against a dump")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out")
    p.add_argument("--verify", help="reference dump directory")
    p.add_argument("--codec", help="limit to one codec's blobs")

    p = sub.add_parser("report", epilog=_FORMATS_NOTE,
                       help="histogram/entropy report for a dump")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--q", type=int, required=True, choices=(8, 12, 16))
    p.add_argument("--out", help="write JSON here instead of stdout")
    return parser


def _cmd_train_demo(args) -> int:
    from .experiment import DeskDemoConfig, run_desk_demo
    from .sparsetrain.train import TrainConfig, config_from_file

    overrides = {}
    if args.config:
        file_cfg = config_from_file(args.config)
        defaults = TrainConfig()
        if file_cfg.alphas:
            overrides["alphas"] = file_cfg.alphas
        if file_cfg.lr != defaults.lr:
            overrides["finetune_lr"] = file_cfg.lr
        if file_cfg.epochs != defaults.epochs:
            overrides["finetune_epochs"] = file_cfg.epochs
        if file_cfg.batch_size != defaults.batch_size:
            overrides["batch_size"] = file_cfg.batch_size
        if file_cfg.weight_decay != defaults.weight_decay:
            overrides["weight_decay"] = file_cfg.weight_decay
        seed = _resolve_seed(args, file_cfg.seed)
    else:
        seed = _resolve_seed(args)
    cfg = DeskDemoConfig(
        out_dir=args.out, seed=seed, idx_dir=args.idx_dir,
        n_train=args.train_size, n_val=args.val_size,
        n_test=args.test_size, n_cal=args.cal_size,
        baseline_epochs=args.baseline_epochs,
        finetune_epochs=args.finetune_epochs,
        **overrides,
    )
    if args.quick:
        cfg = replace(cfg, n_train=1500, n_val=400, n_test=400, n_cal=300,
                      baseline_epochs=3, finetune_epochs=5,
                      finetune_decay_epochs=())
    result = run_desk_demo(cfg)
    m = result.metrics
    print(f"baseline: top1={m['baseline']['top1']:.4f} "
          f"nonzero={m['baseline']['nonzero_fraction']:.4f}")
    print(f"sparse:   top1={m['sparse']['top1']:.4f} "
          f"nonzero={m['sparse']['nonzero_fraction']:.4f} "
          f"(epoch {m['sparse']['selected_epoch']})")
    print(f"speed-up: {m['speedup_ratio']:.2f}x")
    print(f"wrote {result.out_dir}/metrics.json")
    return 0


def _cmd_stats(args) -> int:
    stats: dict[str, tuple[int, int]] = {}
    for e, t in iter_dump(args.in_dir):
        nz, total = stats.get(e.layer, (0, 0))
        stats[e.layer] = (nz + int(np.count_nonzero(t.data)),
                          total + t.element_count)
    if not stats:
        raise FormatError("dump contains no tensors")
    pooled_nz = sum(v[0] for v in stats.values())
    pooled_total = sum(v[1] for v in stats.values())
    payload = {
        "layers": {
            layer: {"nonzero_fraction": nz / total, "elements": total}
            for layer, (nz, total) in stats.items()
        },
        "pooled_nonzero_fraction": pooled_nz / pooled_total,
    }
    if args.json:
        print(json.dumps(payload, indent=2))
    else:
        for layer, row in payload["layers"].items():
            print(f"{layer}: nonzero {100 * row['nonzero_fraction']:.2f}% "
                  f"({row['elements']} elements)")
        print(f"pooled: nonzero {100 * payload['pooled_nonzero_fraction']:.2f}%")
    return 0


def _cmd_quantize(args) -> int:
    from .pipeline import _QUANT_DTYPE, quantized_values
    from .tensorio import ActivationTensor, load_tensor, read_manifest, save_tensor, write_manifest

    params = calibrate_dump(args.train_manifest, args.q)
    in_dir, out_dir = Path(args.in_dir), Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = read_manifest(in_dir)
    for e in entries:
        t = load_tensor(in_dir / e.path)
        values, p = quantized_values(t, params)
        qt = ActivationTensor(
            layer_name=t.layer_name, dims=t.dims, dtype=_QUANT_DTYPE[args.q],
            data=np.asarray(values).reshape(t.dims), quant=p,
        )
        save_tensor(qt, out_dir / e.path)
    write_manifest(entries, out_dir)
    print(f"quantized {len(entries)} tensors at q={args.q} into {out_dir}")
    return 0


def _cmd_search_k(args) -> int:
    k = search_k_dump(args.train_manifest, _CODEC_TAGS[args.codec], args.q)
    print(k)
    return 0


def _cmd_compress(args) -> int:
    codecs = _parse_codecs(args.codec, args.k)
    needs_cal = any(k is None for _, k in codecs)
    if needs_cal and not args.train_manifest:
        raise ConfigError("--k auto requires --train-manifest")
    report = compress_dump(
        args.in_dir, args.out, codecs, args.q,
        cal_dir=args.train_manifest, jobs=max(args.jobs, 1),
        with_zlib=not args.no_zlib, variant=args.variant,
    )
    csv_path, json_path = write_report(report, args.out)
    agg = report.aggregate.gains(report.q)
    for name in report.codec_names:
        k = report.chosen_k.get(name)
        k_note = f" (k={k})" if name in ("eg", "seg") else ""
        print(f"{name}{k_note}: total {agg[name]['total']:.2f}x "
              f"(entropy-only {agg[name]['entropy_only']:.2f}x)")
    if args.stability_check:
        seed = _resolve_seed(args)
        full, half, rel = split_stability(report, report.codec_names[0],
                                          seed=seed)
        print(f"stability[{report.codec_names[0]}]: full {full:.3f}x "
              f"half {half:.3f}x drift {100 * rel:.2f}%")
    print(f"wrote {csv_path} and {json_path}")
    return 0


def _cmd_decompress(args) -> int:
    count = decompress_dump(args.in_dir, out_dir=args.out,
                            verify_dir=args.verify, codec_name=args.codec)
    if args.verify:
        print(f"verified {count} blobs byte-exactly")
    else:
        print(f"decoded {count} blobs")
    return 0


def _cmd_report(args) -> int:
    payload = histogram_report(args.in_dir, args.q)
    text = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n")
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


_COMMANDS = {
    "train-demo": _cmd_train_demo,
    "stats": _cmd_stats,
    "quantize": _cmd_quantize,
    "search-k": _cmd_search_k,
    "compress": _cmd_compress,
    "decompress": _cmd_decompress,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except CorruptionError as exc:
        print(f"verification failure: {exc}", file=sys.stderr)
        return 4
    except (ActcompError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
