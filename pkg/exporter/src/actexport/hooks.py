"""Forward-hook capture of post-activation maps from torch models."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .amc1 import write_manifest, write_tensor


@dataclass(frozen=True)
class HookSpec:
    """What to capture: model id, module names to hook, sample count, sink.

    Layer names are dotted module paths (as printed by named_modules());
    hook the activation modules (ReLU and friends) so the captured maps
    are post-activation.
    """

    model: str
    layers: tuple[str, ...]
    n: int
    out_dir: str


def to_nhwc(t: torch.Tensor) -> np.ndarray:
    """Torch-native layout to the container's N,H,W,C convention."""
    arr = t.detach().cpu()
    if arr.ndim == 4:  # NCHW
        arr = arr.permute(0, 2, 3, 1)
    elif arr.ndim == 2:  # (N, F) dense maps become (N, 1, 1, F)
        arr = arr.reshape(arr.shape[0], 1, 1, arr.shape[1])
    else:
        raise ValueError(f"rank-{arr.ndim} activation not supported")
    return np.ascontiguousarray(arr.numpy().astype(np.float32))


def resolve_modules(model: torch.nn.Module, names) -> tuple[dict, list[str]]:
    """Map requested layer names to modules; unknown names are returned."""
    table = dict(model.named_modules())
    found = {}
    missing = []
    for name in names:
        if name in table:
            found[name] = table[name]
        else:
            missing.append(name)
    return found, missing


def dump_activations(spec: HookSpec, model: torch.nn.Module, batches,
                     allow_negative: bool = False) -> tuple[Path, list[str]]:
    """Run batches through the model, writing one AMC1 file per
    (layer, batch) plus a manifest. Returns (manifest path, skipped names).

    Captured maps are expected to be post-activation; a negative value
    aborts the dump unless allow_negative is set, since it means a
    pre-activation module was hooked by mistake.
    """
    out_dir = Path(spec.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    modules, missing = resolve_modules(model, spec.layers)
    captured: dict[str, torch.Tensor] = {}

    def make_hook(name):
        def hook(_module, _inputs, output):
            captured[name] = output

        return hook

    handles = [m.register_forward_hook(make_hook(name))
               for name, m in modules.items()]
    entries = []
    seen = 0
    try:
        model.eval()
        with torch.no_grad():
            for batch_idx, batch in enumerate(batches):
                if seen >= spec.n:
                    break
                batch = batch[: spec.n - seen]
                captured.clear()
                model(batch)
                for name in modules:
                    if name not in captured:
                        continue
                    arr = to_nhwc(captured[name])
                    if not allow_negative and arr.size and float(arr.min()) < 0:
                        raise ValueError(
                            f"layer {name!r} produced negative values; hook the "
                            "post-activation module or pass allow_negative"
                        )
                    safe = name.replace("/", "_").replace(".", "_")
                    fname = f"{safe}_{batch_idx:03d}.amc1"
                    write_tensor(out_dir / fname, name, arr)
                    entries.append({"path": fname, "layer": name,
                                    "batch": batch_idx, "role": "eval"})
                seen += batch.shape[0]
    finally:
        for h in handles:
            h.remove()
    manifest = write_manifest(entries, out_dir)
    return manifest, missing


def random_image_batches(n: int, batch_size: int, size: int, channels: int = 3,
                         seed: int = 0):
    """Seeded standard-normal image batches, the offline dataset stand-in."""
    gen = torch.Generator().manual_seed(seed)
    remaining = n
    while remaining > 0:
        take = min(batch_size, remaining)
        yield torch.randn(take, channels, size, size, generator=gen)
        remaining -= take


def folder_image_batches(directory: str | Path, n: int, batch_size: int,
                         size: int = 224):
    """Batches from an image folder, resized/cropped/normalized like the
    standard ImageNet evaluation transforms."""
    from PIL import Image

    mean = torch.tensor([0.485, 0.456, 0.406]).view(3, 1, 1)
    std = torch.tensor([0.229, 0.224, 0.225]).view(3, 1, 1)
    paths = sorted(
        p for p in Path(directory).iterdir()
        if p.suffix.lower() in {".jpg", ".jpeg", ".png", ".bmp"}
    )[:n]
    if not paths:
        raise ValueError(f"no images found under {directory}")
    batch = []
    for p in paths:
        img = Image.open(p).convert("RGB")
        scale = int(size * 256 / 224)
        img = img.resize((scale, scale))
        left = (scale - size) // 2
        img = img.crop((left, left, left + size, left + size))
        t = torch.from_numpy(np.asarray(img, dtype=np.float32) / 255.0)
        t = (t.permute(2, 0, 1) - mean) / std
        batch.append(t)
        if len(batch) == batch_size:
            yield torch.stack(batch)
            batch = []
    if batch:
        yield torch.stack(batch)


def load_model(name: str, pretrained: bool = False) -> torch.nn.Module:
    """Resolve a torchvision model by name; random weights by default."""
    from torchvision import models

    weights = "DEFAULT" if pretrained else None
    return models.get_model(name, weights=weights)
