"""Minimal AMC1 container writer.

Implements the shared binary layout directly so this package stays
decoupled from the compression toolkit; the two only meet at the bytes.

    magic "AMC1" | version u8 = 1 | name_len u16 | name bytes (utf-8) |
    dtype u8 | q u8 | x_max f32 | dims 4 x u32 | payload_len u64 | payload

The exporter emits float32 tensors only (dtype code 0, q = 0, x_max = 0);
quantization is the consumer's job so there is a single implementation of
it. Elements are laid out N,H,W,C row-major, payload little-endian.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"AMC1"
VERSION = 1
DTYPE_F32 = 0
MANIFEST_NAME = "manifest.jsonl"

_HEADER_HEAD = struct.Struct("<4sBH")
_HEADER_TAIL = struct.Struct("<BBf4IQ")


def write_tensor(path: str | Path, layer_name: str, data: np.ndarray) -> int:
    """Write one float32 activation tensor; returns bytes written.

    data must already be in N,H,W,C order with exactly four dimensions.
    """
    if data.ndim != 4:
        raise ValueError(f"expected a rank-4 N,H,W,C tensor, got shape {data.shape}")
    data = np.ascontiguousarray(data, dtype=np.float32)
    name = layer_name.encode("utf-8")
    payload = data.astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(_HEADER_HEAD.pack(MAGIC, VERSION, len(name)))
        fh.write(name)
        fh.write(_HEADER_TAIL.pack(DTYPE_F32, 0, 0.0, *data.shape, len(payload)))
        fh.write(payload)
    return _HEADER_HEAD.size + len(name) + _HEADER_TAIL.size + len(payload)


def write_manifest(entries: list[dict], directory: str | Path) -> Path:
    """entries: [{path, layer, batch, role}, ...] in dump order."""
    out = Path(directory) / MANIFEST_NAME
    with open(out, "w", encoding="utf-8") as fh:
        for e in entries:
            fh.write(json.dumps({
                "path": e["path"], "layer": e["layer"],
                "batch": int(e["batch"]), "role": e["role"],
            }) + "\n")
    return out
