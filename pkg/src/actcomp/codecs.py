"""Entropy coders and sparse-format packers.

Order-k exponential-Golomb (EG), its sparse variant (SEG) that reserves
the one-bit codeword "1" for zero, zero-value compression (ZVC), canonical
Huffman with an escape path, and a raw passthrough. Scalar encode/decode
work on bit strings and mirror the published pseudocode one to one; the
tensor-level drivers run vectorized with jitted decode loops and agree
with the scalar forms bit for bit.

Blob container layout (fixed-width fields little-endian):

    magic "SEGB" | version u8 = 1 | codec tag u8 | k u8 | q u8 |
    n_symbols u64 | payload_bits u64 | side_band_len u32 |
    side_band bytes | payload bytes (zero-padded to ceil(payload_bits/8))
"""

from __future__ import annotations

import enum
import heapq
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from . import _kernels
from .bitstream import pack_codes, pack_fixed, unpack_bits, unpack_fixed
from .errors import ConfigError, CorruptionError, FormatError, TruncationError
from .tensorio import ActivationTensor, DType

MAX_K = 32
BLOB_MAGIC = b"SEGB"
BLOB_VERSION = 1
_BLOB_HEADER = struct.Struct("<4sBBBBQQI")


class CodecTag(enum.IntEnum):
    EG = 0
    SEG = 1
    ZVC = 2
    HUFFMAN = 3
    RAW = 4


@dataclass(frozen=True)
class CodecId:
    """Codec selector; k is the order parameter for EG/SEG, unused otherwise."""

    tag: CodecTag
    k: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.k <= MAX_K:
            raise ConfigError(f"order k must be in [0, {MAX_K}], got {self.k}")

    @property
    def name(self) -> str:
        return self.tag.name.lower()


@dataclass
class EncodedBlob:
    """Self-describing compressed payload.

    q is the symbol bitwidth (0 for float passthrough); payload_bits is the
    exact number of meaningful bits; side_band carries codec metadata such
    as a Huffman code-length table and counts toward compressed size.
    """

    codec: CodecId
    q: int
    n_symbols: int
    payload_bits: int
    payload: bytes
    side_band: bytes = b""

    def __post_init__(self) -> None:
        if len(self.payload) != (self.payload_bits + 7) // 8:
            raise FormatError(
                f"payload is {len(self.payload)} bytes but "
                f"{self.payload_bits} bits were declared"
            )

    @property
    def compressed_bits(self) -> int:
        return self.payload_bits + 8 * len(self.side_band)


# ---------------------------------------------------------------------------
# Scalar exponential-Golomb / sparse-exponential-Golomb on bit strings
# ---------------------------------------------------------------------------

def eg_encode(x: int, k: int = 0) -> str:
    """Order-k exp-Golomb codeword for a non-negative integer.

    The codeword is the binary form of x + 2^k padded on the left with
    zeros to 2*len(bin(floor(x / 2^k) + 1)) - 1 + k bits, which is exactly
    the unary-prefixed quotient code followed by the k-bit remainder.
    """
    if x < 0:
        raise ValueError("exp-Golomb encodes non-negative integers only")
    if k < 0:
        raise ValueError("order k must be non-negative")
    width = eg_code_length(x, k)
    return format(x + (1 << k), f"0{width}b")


def eg_decode(bits: str, k: int = 0) -> tuple[int, int]:
    """Decode one order-k codeword prefix; returns (value, bits consumed)."""
    p = 0
    while p < len(bits) and bits[p] == "0":
        p += 1
    need = 2 * p + 1 + k
    if p >= len(bits) or len(bits) < need:
        raise TruncationError("bitstream ended inside an exp-Golomb codeword")
    return int(bits[:need], 2) - (1 << k), need


def seg_encode(x: int, k: int = 0) -> str:
    """Sparse-exp-Golomb: for k > 0, "1" encodes zero and nonzero values
    are the order-k code of x - 1 behind a "0" flag; k = 0 falls back to EG.
    """
    if k == 0:
        return eg_encode(x, 0)
    if x < 0:
        raise ValueError("sparse-exp-Golomb encodes non-negative integers only")
    if x == 0:
        return "1"
    return "0" + eg_encode(x - 1, k)


def seg_decode(bits: str, k: int = 0) -> tuple[int, int]:
    """Exact inverse of seg_encode; returns (value, bits consumed)."""
    if k == 0:
        return eg_decode(bits, 0)
    if not bits:
        raise TruncationError("empty bitstream")
    if bits[0] == "1":
        return 0, 1
    x, used = eg_decode(bits[1:], k)
    return x + 1, used + 1


def eg_code_length(x: int, k: int = 0) -> int:
    return 2 * ((x >> k) + 1).bit_length() - 1 + k


def seg_code_length(x: int, k: int = 0) -> int:
    if k == 0:
        return eg_code_length(x, 0)
    if x == 0:
        return 1
    return 1 + eg_code_length(x - 1, k)


# ---------------------------------------------------------------------------
# Vectorized symbol-stream paths
# ---------------------------------------------------------------------------

def _bit_length(v: np.ndarray) -> np.ndarray:
    """Exact bit_length for positive int64 values (log2 with correction)."""
    b = np.floor(np.log2(v.astype(np.float64))).astype(np.int64)
    b -= (np.int64(1) << b) > v
    b += (np.int64(1) << (b + 1)) <= v
    return b + 1


def _check_symbols(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values).reshape(-1).astype(np.int64)
    if values.size and values.min() < 0:
        raise ValueError("symbols must be non-negative")
    return values


def eg_codes(values: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-symbol (codeword integer, codeword length) for order-k EG."""
    values = _check_symbols(values)
    lens = np.full(values.shape, k + 1, dtype=np.int64)
    if values.size:
        lens += 2 * (_bit_length((values >> k) + 1) - 1)
    return values + (np.int64(1) << k), lens


def seg_codes(values: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-symbol (codeword integer, codeword length) for order-k SEG."""
    if k == 0:
        return eg_codes(values, 0)
    values = _check_symbols(values)
    vals = np.ones(values.shape, dtype=np.int64)
    lens = np.ones(values.shape, dtype=np.int64)
    nz = values > 0
    if nz.any():
        shifted = values[nz] - 1
        vals[nz] = shifted + (np.int64(1) << k)
        # the "0" flag bit turns the 2b-1+k EG length into 2b+k
        lens[nz] = 2 * _bit_length((shifted >> k) + 1) + k
    return vals, lens


def eg_encode_stream(values: np.ndarray, k: int) -> tuple[bytes, int]:
    return pack_codes(*eg_codes(values, k))


def seg_encode_stream(values: np.ndarray, k: int) -> tuple[bytes, int]:
    return pack_codes(*seg_codes(values, k))


def eg_stream_bits(values: np.ndarray, k: int) -> int:
    """Encoded size in bits without materializing the stream."""
    return int(eg_codes(values, k)[1].sum())


def seg_stream_bits(values: np.ndarray, k: int) -> int:
    return int(seg_codes(values, k)[1].sum())


def _decode_prefix_stream(kernel, payload: bytes, payload_bits: int, n: int,
                          k: int) -> np.ndarray:
    bits = unpack_bits(payload, payload_bits)
    out, consumed = kernel(bits, n, k)
    if consumed < 0:
        raise TruncationError("bitstream ended inside a codeword")
    if consumed != payload_bits:
        raise CorruptionError(
            f"{payload_bits - consumed} slack bits after decoding {n} symbols"
        )
    return out


def eg_decode_stream(payload: bytes, payload_bits: int, n: int, k: int) -> np.ndarray:
    return _decode_prefix_stream(_kernels.decode_eg_stream, payload, payload_bits, n, k)


def seg_decode_stream(payload: bytes, payload_bits: int, n: int, k: int) -> np.ndarray:
    return _decode_prefix_stream(_kernels.decode_seg_stream, payload, payload_bits, n, k)


# ---------------------------------------------------------------------------
# Zero-value compression
# ---------------------------------------------------------------------------

def zvc_encode(values: np.ndarray, q: int) -> EncodedBlob:
    """Bitmask of nonzero positions followed by the nonzero values at q bits.

    payload_bits = n + q * nnz exactly.
    """
    values = _check_symbols(values)
    if values.size and values.max() >= (1 << q):
        raise ValueError(f"value {values.max()} out of range for {q} bits")
    mask = (values != 0).astype(np.int64)
    nonzero = values[values != 0]
    vals = np.concatenate([mask, nonzero])
    lens = np.concatenate([
        np.ones(values.size, dtype=np.int64),
        np.full(nonzero.size, q, dtype=np.int64),
    ])
    payload, nbits = pack_codes(vals, lens)
    return EncodedBlob(
        codec=CodecId(CodecTag.ZVC), q=q, n_symbols=values.size,
        payload_bits=nbits, payload=payload,
    )


def zvc_decode(blob: EncodedBlob) -> np.ndarray:
    if blob.q not in (8, 12, 16):
        raise CorruptionError(f"ZVC blob carries invalid bitwidth {blob.q}")
    n = blob.n_symbols
    bits = unpack_bits(blob.payload, blob.payload_bits)
    if bits.size < n:
        raise CorruptionError("payload shorter than its own bitmask")
    mask = bits[:n].astype(bool)
    nnz = int(mask.sum())
    if blob.payload_bits != n + blob.q * nnz:
        raise CorruptionError(
            f"payload_bits {blob.payload_bits} inconsistent with mask "
            f"population {nnz}"
        )
    out = np.zeros(n, dtype=np.int64)
    out[mask] = unpack_fixed(bits[n:], blob.q)
    return out


# ---------------------------------------------------------------------------
# Canonical Huffman with an escape symbol
# ---------------------------------------------------------------------------

def escape_symbol(q: int) -> int:
    """Reserved out-of-alphabet symbol id: one past the largest q-bit value."""
    return 1 << q


@dataclass(frozen=True)
class HuffmanTable:
    """Canonical code: (symbol, length) pairs sorted by (length, symbol).

    Codes are assigned in that order starting from zero, the textbook
    canonical rule, so the lengths alone reconstruct the codebook.
    """

    code_lengths: tuple[tuple[int, int], ...]
    q: int
    rule: str = field(default="canonical-length-then-symbol")

    def codes(self) -> dict[int, tuple[int, int]]:
        """symbol -> (code, length) under the canonical assignment."""
        out = {}
        code = 0
        prev_len = None
        for sym, length in self.code_lengths:
            code = code if prev_len is None else (code + 1) << (length - prev_len)
            out[sym] = (code, length)
            prev_len = length
        return out

    def kraft_sum(self) -> float:
        return float(sum(2.0 ** -length for _, length in self.code_lengths))

    def mean_length(self, histogram: Mapping[int, int]) -> float:
        lengths = dict(self.code_lengths)
        esc = escape_symbol(self.q)
        total = sum(histogram.values())
        bits = 0
        for sym, count in histogram.items():
            bits += count * lengths.get(sym, lengths[esc] + self.q)
        return bits / total


def huffman_build(histogram: Mapping[int, int] | np.ndarray, q: int) -> HuffmanTable:
    """Build a canonical table over observed symbols plus one ESCAPE symbol."""
    if isinstance(histogram, np.ndarray):
        syms = np.nonzero(histogram)[0]
        items = [(int(s), int(histogram[s])) for s in syms]
    else:
        items = [(int(s), int(c)) for s, c in histogram.items() if c > 0]
    if not items:
        raise ValueError("histogram must be nonempty")
    esc = escape_symbol(q)
    for sym, _ in items:
        if not 0 <= sym < esc:
            raise ValueError(f"symbol {sym} out of range for {q} bits")
    items.append((esc, 1))

    # Standard heap merge; ties broken by insertion order for determinism.
    heap = [(count, i, [sym]) for i, (sym, count) in enumerate(sorted(items))]
    heapq.heapify(heap)
    depth = {sym: 0 for sym, _ in items}
    tie = len(heap)
    while len(heap) > 1:
        c1, _, s1 = heapq.heappop(heap)
        c2, _, s2 = heapq.heappop(heap)
        for sym in s1 + s2:
            depth[sym] += 1
        heapq.heappush(heap, (c1 + c2, tie, s1 + s2))
        tie += 1
    pairs = sorted(depth.items(), key=lambda kv: (kv[1], kv[0]))
    return HuffmanTable(code_lengths=tuple(pairs), q=q)


def huffman_table_to_bytes(table: HuffmanTable) -> bytes:
    out = [struct.pack("<I", len(table.code_lengths))]
    for sym, length in table.code_lengths:
        out.append(struct.pack("<IB", sym, length))
    return b"".join(out)


def huffman_table_from_bytes(data: bytes, q: int) -> HuffmanTable:
    if len(data) < 4:
        raise CorruptionError("side band too short for a Huffman table")
    (count,) = struct.unpack_from("<I", data, 0)
    if len(data) != 4 + 5 * count:
        raise CorruptionError("Huffman table length mismatch")
    pairs = []
    for i in range(count):
        sym, length = struct.unpack_from("<IB", data, 4 + 5 * i)
        if length == 0 or length > 63 or sym > escape_symbol(q):
            raise CorruptionError("invalid Huffman table entry")
        pairs.append((sym, length))
    table = HuffmanTable(code_lengths=tuple(pairs), q=q)
    if table.kraft_sum() > 1.0 + 1e-12:
        raise CorruptionError("Huffman table violates the Kraft inequality")
    return table


def _canonical_arrays(table: HuffmanTable):
    codes = table.codes()
    max_len = max(length for _, length in table.code_lengths)
    counts = np.zeros(max_len + 1, dtype=np.int64)
    for _, length in table.code_lengths:
        counts[length] += 1
    first_code = np.zeros(max_len + 1, dtype=np.int64)
    offsets = np.zeros(max_len + 1, dtype=np.int64)
    symbols = np.array([sym for sym, _ in table.code_lengths], dtype=np.int64)
    code = 0
    offset = 0
    for length in range(1, max_len + 1):
        first_code[length] = code
        offsets[length] = offset
        code = (code + counts[length]) << 1
        offset += counts[length]
    return max_len, first_code, counts, offsets, symbols, codes


def huffman_encode(values: np.ndarray, table: HuffmanTable) -> EncodedBlob:
    """Encode q-bit symbols; values missing from the table go through ESCAPE
    followed by the raw q-bit value. The serialized table rides in side_band.
    """
    values = _check_symbols(values)
    q = table.q
    esc = escape_symbol(q)
    if values.size and values.max() >= esc:
        raise ValueError(f"value {values.max()} out of range for {q} bits")
    code_arr = np.zeros(esc + 1, dtype=np.int64)
    len_arr = np.zeros(esc + 1, dtype=np.int64)
    for sym, (code, length) in table.codes().items():
        code_arr[sym] = code
        len_arr[sym] = length
    lens = len_arr[values]
    escaped = lens == 0
    n_entries = values.size + int(escaped.sum())
    out_vals = np.empty(n_entries, dtype=np.int64)
    out_lens = np.empty(n_entries, dtype=np.int64)
    slots = np.arange(values.size) + np.cumsum(escaped) - escaped
    out_vals[slots] = np.where(escaped, code_arr[esc], code_arr[values])
    out_lens[slots] = np.where(escaped, len_arr[esc], lens)
    out_vals[slots[escaped] + 1] = values[escaped]
    out_lens[slots[escaped] + 1] = q
    payload, nbits = pack_codes(out_vals, out_lens)
    return EncodedBlob(
        codec=CodecId(CodecTag.HUFFMAN), q=q, n_symbols=values.size,
        payload_bits=nbits, payload=payload,
        side_band=huffman_table_to_bytes(table),
    )


def huffman_decode(blob: EncodedBlob) -> np.ndarray:
    table = huffman_table_from_bytes(blob.side_band, blob.q)
    max_len, first_code, counts, offsets, symbols, _ = _canonical_arrays(table)
    bits = unpack_bits(blob.payload, blob.payload_bits)
    out, consumed = _kernels.decode_huffman_stream(
        bits, blob.n_symbols, blob.q, escape_symbol(blob.q),
        max_len, first_code, counts, offsets, symbols,
    )
    if consumed == -1:
        raise TruncationError("bitstream ended inside a Huffman codeword")
    if consumed == -2:
        raise CorruptionError("invalid Huffman code in stream")
    if consumed != blob.payload_bits:
        raise CorruptionError("slack bits after Huffman decode")
    return out


# ---------------------------------------------------------------------------
# Tensor-level drivers
# ---------------------------------------------------------------------------

def encode_tensor(t: ActivationTensor, codec: CodecId) -> EncodedBlob:
    """Encode a quantized tensor's elements in N,H,W,C row-major order.

    RAW additionally accepts float32 tensors as an uncompressed passthrough
    (q = 0).
    """
    if t.dtype == DType.F32:
        if codec.tag != CodecTag.RAW:
            raise ConfigError(
                f"{codec.tag.name} requires a quantized tensor; got float32"
            )
        payload = t.values().astype("<f4").tobytes()
        return EncodedBlob(
            codec=codec, q=0, n_symbols=t.element_count,
            payload_bits=32 * t.element_count, payload=payload,
        )
    q = t.quant.q
    values = t.values().astype(np.int64)
    if codec.tag == CodecTag.EG:
        payload, nbits = eg_encode_stream(values, codec.k)
    elif codec.tag == CodecTag.SEG:
        payload, nbits = seg_encode_stream(values, codec.k)
    elif codec.tag == CodecTag.ZVC:
        blob = zvc_encode(values, q)
        blob.codec = codec
        return blob
    elif codec.tag == CodecTag.HUFFMAN:
        counts = np.bincount(values, minlength=0)
        table = huffman_build(counts, q)
        blob = huffman_encode(values, table)
        blob.codec = codec
        return blob
    elif codec.tag == CodecTag.RAW:
        payload, nbits = pack_fixed(values, q)
    else:  # pragma: no cover - enum is exhaustive
        raise ConfigError(f"unknown codec {codec.tag}")
    return EncodedBlob(
        codec=codec, q=q, n_symbols=t.element_count,
        payload_bits=nbits, payload=payload,
    )


def decode_tensor(blob: EncodedBlob) -> np.ndarray:
    """Invert encode_tensor; returns the flat element array."""
    if blob.q == 0:
        if blob.codec.tag != CodecTag.RAW:
            raise ConfigError("q = 0 is only valid for RAW float passthrough")
        expected = 4 * blob.n_symbols
        if len(blob.payload) != expected or blob.payload_bits != 8 * expected:
            raise CorruptionError("float passthrough payload length mismatch")
        return np.frombuffer(blob.payload, dtype="<f4").astype(np.float32)
    tag = blob.codec.tag
    if tag == CodecTag.EG:
        out = eg_decode_stream(blob.payload, blob.payload_bits, blob.n_symbols,
                               blob.codec.k)
    elif tag == CodecTag.SEG:
        out = seg_decode_stream(blob.payload, blob.payload_bits, blob.n_symbols,
                                blob.codec.k)
    elif tag == CodecTag.ZVC:
        out = zvc_decode(blob)
    elif tag == CodecTag.HUFFMAN:
        out = huffman_decode(blob)
    elif tag == CodecTag.RAW:
        if blob.payload_bits != blob.q * blob.n_symbols:
            raise CorruptionError("RAW payload length mismatch")
        out = unpack_fixed(unpack_bits(blob.payload, blob.payload_bits), blob.q)
    else:  # pragma: no cover
        raise ConfigError(f"unknown codec {tag}")
    if out.size != blob.n_symbols:
        raise CorruptionError("decoded symbol count mismatch")
    return out.astype(np.uint8 if blob.q == 8 else np.uint16)


def compression_gain(raw_bits: int, blob: EncodedBlob,
                     include_quantization: bool = False,
                     source_bits: int = 32) -> float:
    """Size ratio before/after coding; side-band bits count as compressed.

    With include_quantization the float-to-q-bit reduction is credited on
    top of the entropy-coding gain.
    """
    denom = blob.compressed_bits
    if denom == 0:
        raise ValueError("gain undefined for an empty payload")
    gain = raw_bits / denom
    if include_quantization and blob.q:
        gain *= source_bits / blob.q
    return gain


def zlib_stream_bits(values: np.ndarray, q: int, level: int = 6) -> int:
    """Compressed size of the RAW bit packing under zlib (report baseline)."""
    payload, _ = pack_fixed(_check_symbols(values), q)
    return 8 * len(zlib.compress(payload, level))


# ---------------------------------------------------------------------------
# Blob container
# ---------------------------------------------------------------------------

def blob_to_bytes(blob: EncodedBlob) -> bytes:
    header = _BLOB_HEADER.pack(
        BLOB_MAGIC, BLOB_VERSION, int(blob.codec.tag), blob.codec.k, blob.q,
        blob.n_symbols, blob.payload_bits, len(blob.side_band),
    )
    return header + blob.side_band + blob.payload


def blob_from_bytes(data: bytes) -> EncodedBlob:
    if len(data) < _BLOB_HEADER.size:
        raise FormatError("blob too short for its header")
    magic, version, tag, k, q, n_symbols, payload_bits, side_len = \
        _BLOB_HEADER.unpack_from(data, 0)
    if magic != BLOB_MAGIC:
        raise FormatError(f"bad blob magic {magic!r}")
    if version != BLOB_VERSION:
        raise FormatError(f"unsupported blob version {version}")
    try:
        codec = CodecId(tag=CodecTag(tag), k=k)
    except ValueError as exc:
        raise FormatError(f"unknown codec tag {tag}") from exc
    body = data[_BLOB_HEADER.size:]
    payload_len = (payload_bits + 7) // 8
    if len(body) != side_len + payload_len:
        raise FormatError(
            f"blob body is {len(body)} bytes, header implies {side_len + payload_len}"
        )
    return EncodedBlob(
        codec=codec, q=q, n_symbols=n_symbols, payload_bits=payload_bits,
        payload=body[side_len:], side_band=body[:side_len],
    )


def save_blob(blob: EncodedBlob, path: str | Path) -> int:
    data = blob_to_bytes(blob)
    Path(path).write_bytes(data)
    return len(data)


def load_blob(path: str | Path) -> EncodedBlob:
    return blob_from_bytes(Path(path).read_bytes())
