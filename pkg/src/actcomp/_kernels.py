"""Numba hot loops for stream decoding.

Decoding prefix codes is inherently sequential, so the per-symbol loops
live here as jitted kernels over pre-expanded bit arrays. Kernels return
a status flag instead of raising: -1 means the stream ended mid-codeword,
otherwise the value is the number of bits consumed.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _decode_eg_one(bits, pos, k):
    """Decode one order-k exp-Golomb codeword at bit offset pos.

    Returns (x, new_pos). new_pos == -1 signals truncation.
    """
    total = bits.shape[0]
    p = 0
    while True:
        if pos >= total:
            return -1, -1
        if bits[pos] != 0:
            break
        p += 1
        pos += 1
    need = p + 1 + k
    if pos + need > total:
        return -1, -1
    v = np.int64(0)
    for j in range(need):
        v = (v << 1) | bits[pos + j]
    pos += need
    return v - (np.int64(1) << k), pos


@njit(cache=True)
def decode_eg_stream(bits, n, k):
    """Decode n order-k exp-Golomb codewords; returns (values, consumed)."""
    out = np.empty(n, dtype=np.int64)
    pos = 0
    for i in range(n):
        x, pos = _decode_eg_one(bits, pos, k)
        if pos < 0:
            return out, -1
        out[i] = x
    return out, pos


@njit(cache=True)
def decode_seg_stream(bits, n, k):
    """Decode n sparse-exp-Golomb codewords; returns (values, consumed)."""
    if k == 0:
        return decode_eg_stream(bits, n, 0)
    out = np.empty(n, dtype=np.int64)
    pos = 0
    total = bits.shape[0]
    for i in range(n):
        if pos >= total:
            return out, -1
        if bits[pos] == 1:
            out[i] = 0
            pos += 1
            continue
        pos += 1
        x, pos = _decode_eg_one(bits, pos, k)
        if pos < 0:
            return out, -1
        out[i] = x + 1
    return out, pos


@njit(cache=True)
def decode_huffman_stream(bits, n, q, esc_symbol, max_len, first_code, counts,
                          offsets, symbols):
    """Decode n canonical-Huffman symbols; ESCAPE is followed by q raw bits.

    first_code/counts/offsets are indexed by code length; symbols holds the
    canonical symbol order. Returns (values, consumed), consumed == -1 on
    truncation, -2 on an invalid code.
    """
    out = np.empty(n, dtype=np.int64)
    pos = 0
    total = bits.shape[0]
    for i in range(n):
        code = np.int64(0)
        length = 0
        sym = np.int64(-1)
        while True:
            if pos >= total:
                return out, -1
            code = (code << 1) | bits[pos]
            pos += 1
            length += 1
            if length > max_len:
                return out, -2
            c = counts[length]
            if c > 0:
                fc = first_code[length]
                if fc <= code < fc + c:
                    sym = symbols[offsets[length] + code - fc]
                    break
        if sym == esc_symbol:
            if pos + q > total:
                return out, -1
            v = np.int64(0)
            for j in range(q):
                v = (v << 1) | bits[pos + j]
            pos += q
            out[i] = v
        else:
            out[i] = sym
    return out, pos
