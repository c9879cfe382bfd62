"""MSB-first bit-level writer and reader underpinning all entropy coders.

Bits are placed most-significant-first within each byte, so a textual
code string like "00100" lands in the buffer left to right. The final
byte is zero-padded; containers record the exact payload bit length so
pad bits are never interpreted.
"""

from __future__ import annotations

import numpy as np

from .errors import TruncationError

MAX_FIELD_BITS = 64


class BitWriter:
    """Accumulates bits MSB-first. Single-owner, no global state."""

    __slots__ = ("_done", "_acc", "_nacc")

    def __init__(self) -> None:
        self._done = bytearray()
        self._acc = 0  # pending bits, < 8 of them
        self._nacc = 0

    @property
    def bit_length(self) -> int:
        """Total number of bits written so far."""
        return 8 * len(self._done) + self._nacc

    def write_bits(self, value: int, nbits: int) -> None:
        """Append the nbits low-order bits of value, most significant first."""
        if not 0 <= nbits <= MAX_FIELD_BITS:
            raise ValueError(f"nbits must be in [0, {MAX_FIELD_BITS}], got {nbits}")
        if value < 0 or value >> nbits:
            raise ValueError(f"value {value} does not fit in {nbits} bits")
        self._acc = (self._acc << nbits) | value
        self._nacc += nbits
        while self._nacc >= 8:
            self._nacc -= 8
            self._done.append((self._acc >> self._nacc) & 0xFF)
        self._acc &= (1 << self._nacc) - 1

    def getvalue(self) -> bytes:
        """Return the buffer, final byte zero-padded. Does not mutate state."""
        if self._nacc == 0:
            return bytes(self._done)
        return bytes(self._done) + bytes([(self._acc << (8 - self._nacc)) & 0xFF])


class BitReader:
    """Reads bits MSB-first from a byte buffer.

    An explicit ``bit_length`` bounds reads below 8 * len(buffer) so that
    pad bits of the final byte can never be consumed.
    """

    __slots__ = ("_buf", "_cursor", "_nbits")

    def __init__(self, data: bytes, bit_length: int | None = None) -> None:
        self._buf = data
        self._cursor = 0
        self._nbits = 8 * len(data) if bit_length is None else bit_length
        if self._nbits > 8 * len(data):
            raise ValueError("bit_length exceeds buffer size")

    @property
    def bit_cursor(self) -> int:
        return self._cursor

    @property
    def bits_remaining(self) -> int:
        return self._nbits - self._cursor

    def read_bits(self, nbits: int) -> int:
        """Return the integer formed by the next nbits bits, MSB-first."""
        if not 0 <= nbits <= MAX_FIELD_BITS:
            raise ValueError(f"nbits must be in [0, {MAX_FIELD_BITS}], got {nbits}")
        if self._cursor + nbits > self._nbits:
            raise TruncationError(
                f"read of {nbits} bits at cursor {self._cursor} "
                f"overruns stream of {self._nbits} bits"
            )
        value = 0
        pos = self._cursor
        remaining = nbits
        while remaining > 0:
            byte = self._buf[pos >> 3]
            offset = pos & 7
            avail = 8 - offset
            take = min(avail, remaining)
            chunk = (byte >> (avail - take)) & ((1 << take) - 1)
            value = (value << take) | chunk
            pos += take
            remaining -= take
        self._cursor = pos
        return value

    def read_bit(self) -> int:
        return self.read_bits(1)


def pack_codes(values: np.ndarray, lengths: np.ndarray) -> tuple[bytes, int]:
    """Concatenate variable-length codewords into a zero-padded byte string.

    values[i] is written MSB-first in exactly lengths[i] bits. Lengths of
    zero are allowed and contribute nothing. Returns (payload, total_bits).
    """
    values = np.asarray(values, dtype=np.int64)
    lengths = np.asarray(lengths, dtype=np.int64)
    if values.shape != lengths.shape:
        raise ValueError("values and lengths must have identical shapes")
    total = int(lengths.sum())
    if total == 0:
        return b"", 0
    if lengths.max() > 63:
        raise ValueError("codeword longer than 63 bits")
    # Global bit index -> (value, shift) of the owning codeword.
    spread_vals = np.repeat(values, lengths)
    offsets = np.cumsum(lengths) - lengths
    pos_in_code = np.arange(total, dtype=np.int64) - np.repeat(offsets, lengths)
    shifts = np.repeat(lengths, lengths) - 1 - pos_in_code
    bits = ((spread_vals >> shifts) & 1).astype(np.uint8)
    return np.packbits(bits).tobytes(), total


def unpack_bits(payload: bytes, nbits: int) -> np.ndarray:
    """Expand a payload into a uint8 array of its first nbits bits."""
    if nbits > 8 * len(payload):
        raise TruncationError(
            f"payload of {len(payload)} bytes cannot hold {nbits} bits"
        )
    if nbits == 0:
        return np.zeros(0, dtype=np.uint8)
    return np.unpackbits(np.frombuffer(payload, dtype=np.uint8))[:nbits]


def pack_fixed(values: np.ndarray, width: int) -> tuple[bytes, int]:
    """Pack equal-width fields MSB-first; returns (payload, total_bits)."""
    values = np.asarray(values, dtype=np.int64)
    lengths = np.full(values.shape, width, dtype=np.int64)
    return pack_codes(values, lengths)


def unpack_fixed(bits: np.ndarray, width: int) -> np.ndarray:
    """Inverse of pack_fixed over an already-expanded bit array."""
    if width == 0 or bits.size == 0:
        return np.zeros(0, dtype=np.int64)
    if bits.size % width:
        raise TruncationError("bit count is not a multiple of the field width")
    mat = bits.reshape(-1, width).astype(np.int64)
    weights = 1 << np.arange(width - 1, -1, -1, dtype=np.int64)
    return mat @ weights
