"""actexport CLI: dump activation maps of a torch model to AMC1 files."""

from __future__ import annotations

import argparse
import sys

from .hooks import (
    HookSpec,
    dump_activations,
    folder_image_batches,
    load_model,
    random_image_batches,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="actexport",
        description="Dump post-ReLU activation maps into AMC1 containers",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="capture activations of a model")
    p.add_argument("--model", required=True,
                   help="torchvision model name, e.g. resnet18")
    p.add_argument("--layers", required=True,
                   help="comma-separated module names (post-activation)")
    p.add_argument("--n", type=int, required=True, help="sample count")
    p.add_argument("--out", required=True, help="output dump directory")
    p.add_argument("--pretrained", action="store_true",
                   help="load pretrained weights (needs network or cache)")
    p.add_argument("--images", help="image folder; default is seeded noise")
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--input-size", type=int, default=224)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--allow-negative", action="store_true",
                   help="permit hooking pre-activation modules")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        model = load_model(args.model, pretrained=args.pretrained)
    except Exception as exc:
        print(f"error: cannot load model {args.model!r}: {exc}", file=sys.stderr)
        return 3
    spec = HookSpec(model=args.model, layers=tuple(args.layers.split(",")),
                    n=args.n, out_dir=args.out)
    if args.images:
        batches = folder_image_batches(args.images, args.n, args.batch_size,
                                       size=args.input_size)
    else:
        batches = random_image_batches(args.n, args.batch_size,
                                       args.input_size, seed=args.seed)
    try:
        manifest, missing = dump_activations(spec, model, batches,
                                             allow_negative=args.allow_negative)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {manifest}")
    if missing:
        print("skipped unknown layers: " + ", ".join(missing), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
