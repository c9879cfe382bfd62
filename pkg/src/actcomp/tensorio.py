"""Binary container for activation tensors plus the dump manifest.

One tensor per file. Layout (all fixed-width fields little-endian):

    magic "AMC1" | version u8 | name_len u16 | name bytes (utf-8) |
    dtype u8 | q u8 | x_max f32 | dims 4 x u32 | payload_len u64 | payload

Element order is N,H,W,C row-major. U12 payloads pack two values into
three bytes, big nibble first. Multi-tensor dumps are directories with a
"manifest.jsonl" listing {path, layer, batch, role} per file.
"""

from __future__ import annotations

import enum
import io
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator

import numpy as np

from .errors import FormatError
from .quantizer import QuantParams

MAGIC = b"AMC1"
VERSION = 1
MANIFEST_NAME = "manifest.jsonl"

_HEADER_HEAD = struct.Struct("<4sBH")
_HEADER_TAIL = struct.Struct("<BBf4IQ")


class DType(enum.IntEnum):
    F32 = 0
    U8 = 1
    U12 = 2
    U16 = 3


# In-memory representation per container dtype.
_NP_DTYPE = {
    DType.F32: np.float32,
    DType.U8: np.uint8,
    DType.U12: np.uint16,  # 12-bit values travel in 16-bit containers
    DType.U16: np.uint16,
}

_VALUE_BITS = {DType.U8: 8, DType.U12: 12, DType.U16: 16}


@dataclass
class ActivationTensor:
    """One layer's post-ReLU map with shape metadata and quantization state."""

    layer_name: str
    dims: tuple[int, int, int, int]
    dtype: DType
    data: np.ndarray
    quant: QuantParams | None = None

    def __post_init__(self) -> None:
        self.dims = tuple(int(d) for d in self.dims)
        if len(self.dims) != 4:
            raise ValueError("dims must be (N, H, W, C)")
        if self.data.size != self.element_count:
            raise ValueError(
                f"data has {self.data.size} elements, dims imply {self.element_count}"
            )
        if (self.quant is None) != (self.dtype == DType.F32):
            raise ValueError("quant params must be present iff dtype is quantized")
        expected = _NP_DTYPE[self.dtype]
        if self.data.dtype != expected:
            raise ValueError(f"dtype {self.dtype.name} expects {expected} data")
        self.data = np.ascontiguousarray(self.data).reshape(self.dims)

    @property
    def element_count(self) -> int:
        n, h, w, c = self.dims
        return n * h * w * c

    def values(self) -> np.ndarray:
        """Flat element view in canonical N,H,W,C row-major order."""
        return self.data.reshape(-1)


def nonzero_fraction(t: ActivationTensor | np.ndarray) -> float:
    """count(elements != 0) / element count; exact comparison for floats."""
    data = t.data if isinstance(t, ActivationTensor) else np.asarray(t)
    if data.size == 0:
        return 0.0
    return np.count_nonzero(data) / data.size


def _pack_u12(values: np.ndarray) -> bytes:
    v = values.astype(np.uint32).reshape(-1)
    if v.size and v.max() > 0xFFF:
        raise ValueError("U12 value out of range")
    odd = v.size % 2
    if odd:
        v = np.concatenate([v, np.zeros(1, dtype=np.uint32)])
    a, b = v[0::2], v[1::2]
    out = np.empty((a.size, 3), dtype=np.uint8)
    out[:, 0] = a >> 4
    out[:, 1] = ((a & 0xF) << 4) | (b >> 8)
    out[:, 2] = b & 0xFF
    raw = out.tobytes()
    return raw[:-1] if odd else raw  # a trailing lone value needs only 2 bytes


def _unpack_u12(payload: bytes, count: int) -> np.ndarray:
    expected = u12_payload_len(count)
    if len(payload) != expected:
        raise FormatError(f"U12 payload is {len(payload)} bytes, expected {expected}")
    buf = payload if count % 2 == 0 else payload + b"\x00"
    raw = np.frombuffer(buf, dtype=np.uint8).reshape(-1, 3).astype(np.uint16)
    a = (raw[:, 0] << 4) | (raw[:, 1] >> 4)
    b = ((raw[:, 1] & 0xF) << 8) | raw[:, 2]
    out = np.empty(2 * raw.shape[0], dtype=np.uint16)
    out[0::2] = a
    out[1::2] = b
    return out[:count]


def u12_payload_len(count: int) -> int:
    return (3 * count + 1) // 2


def payload_length(dtype: DType, count: int) -> int:
    if dtype == DType.F32:
        return 4 * count
    if dtype == DType.U8:
        return count
    if dtype == DType.U16:
        return 2 * count
    return u12_payload_len(count)


def save_tensor(t: ActivationTensor, sink: BinaryIO | str | Path) -> int:
    """Serialize a tensor; returns the number of bytes written."""
    if isinstance(sink, (str, Path)):
        with open(sink, "wb") as fh:
            return save_tensor(t, fh)
    name = t.layer_name.encode("utf-8")
    if len(name) > 0xFFFF:
        raise ValueError("layer name too long")
    flat = t.values()
    if t.dtype == DType.F32:
        payload = flat.astype("<f4").tobytes()
        q, x_max = 0, 0.0
    else:
        bits = _VALUE_BITS[t.dtype]
        if flat.size and int(flat.max()) >= 1 << bits:
            raise ValueError(f"{t.dtype.name} value out of range")
        if t.dtype == DType.U12:
            payload = _pack_u12(flat)
        else:
            payload = flat.astype("<u1" if t.dtype == DType.U8 else "<u2").tobytes()
        q, x_max = t.quant.q, t.quant.x_max
    head = _HEADER_HEAD.pack(MAGIC, VERSION, len(name))
    tail = _HEADER_TAIL.pack(int(t.dtype), q, x_max, *t.dims, len(payload))
    sink.write(head)
    sink.write(name)
    sink.write(tail)
    sink.write(payload)
    return len(head) + len(name) + len(tail) + len(payload)


def _read_exact(fh: BinaryIO, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise FormatError(f"truncated container: wanted {n} bytes, got {len(data)}")
    return data


def load_tensor(source: BinaryIO | str | Path | bytes) -> ActivationTensor:
    """Parse a container; raises FormatError on any integrity violation."""
    if isinstance(source, (str, Path)):
        with open(source, "rb") as fh:
            return load_tensor(fh)
    if isinstance(source, bytes):
        return load_tensor(io.BytesIO(source))
    magic, version, name_len = _HEADER_HEAD.unpack(_read_exact(source, _HEADER_HEAD.size))
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported container version {version}")
    name = _read_exact(source, name_len).decode("utf-8")
    dtype_code, q, x_max, d0, d1, d2, d3, payload_len = _HEADER_TAIL.unpack(
        _read_exact(source, _HEADER_TAIL.size)
    )
    try:
        dtype = DType(dtype_code)
    except ValueError as exc:
        raise FormatError(f"unknown dtype code {dtype_code}") from exc
    dims = (d0, d1, d2, d3)
    count = d0 * d1 * d2 * d3
    if payload_len != payload_length(dtype, count):
        raise FormatError(
            f"payload length {payload_len} inconsistent with dims {dims} "
            f"and dtype {dtype.name}"
        )
    payload = _read_exact(source, payload_len)
    if dtype == DType.F32:
        data = np.frombuffer(payload, dtype="<f4").astype(np.float32)
        quant = None
    else:
        if dtype == DType.U12:
            data = _unpack_u12(payload, count)
        elif dtype == DType.U8:
            data = np.frombuffer(payload, dtype="<u1").copy()
        else:
            data = np.frombuffer(payload, dtype="<u2").astype(np.uint16)
        quant = QuantParams(q=q, x_max=x_max)
    return ActivationTensor(
        layer_name=name, dims=dims, dtype=dtype, data=data.reshape(dims), quant=quant
    )


@dataclass(frozen=True)
class ManifestEntry:
    """One dump file: relative path, layer name, batch index, split role."""

    path: str
    layer: str
    batch: int
    role: str


def write_manifest(entries: Iterable[ManifestEntry], directory: str | Path) -> Path:
    path = Path(directory) / MANIFEST_NAME
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            fh.write(json.dumps(
                {"path": e.path, "layer": e.layer, "batch": e.batch, "role": e.role}
            ) + "\n")
    return path


def read_manifest(directory: str | Path) -> list[ManifestEntry]:
    path = Path(directory) / MANIFEST_NAME
    if not path.exists():
        raise FormatError(f"no {MANIFEST_NAME} in {directory}")
    entries = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            entries.append(ManifestEntry(
                path=row["path"], layer=row["layer"],
                batch=int(row["batch"]), role=row["role"],
            ))
    return entries


def iter_dump(directory: str | Path, layer: str | None = None,
              role: str | None = None) -> Iterator[tuple[ManifestEntry, ActivationTensor]]:
    """Yield (entry, tensor) pairs from a dump directory in manifest order."""
    directory = Path(directory)
    for e in read_manifest(directory):
        if layer is not None and e.layer != layer:
            continue
        if role is not None and e.role != role:
            continue
        yield e, load_tensor(directory / e.path)
