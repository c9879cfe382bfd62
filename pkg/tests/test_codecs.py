import math

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from actcomp import codecs
from actcomp.codecs import (
    CodecId,
    CodecTag,
    EncodedBlob,
    blob_from_bytes,
    blob_to_bytes,
    compression_gain,
    decode_tensor,
    eg_code_length,
    eg_decode,
    eg_decode_stream,
    eg_encode,
    eg_encode_stream,
    eg_stream_bits,
    encode_tensor,
    escape_symbol,
    huffman_build,
    huffman_decode,
    huffman_encode,
    seg_code_length,
    seg_decode,
    seg_decode_stream,
    seg_encode,
    seg_encode_stream,
    seg_stream_bits,
    zvc_decode,
    zvc_encode,
)
from actcomp.errors import ConfigError, CorruptionError, FormatError, TruncationError
from actcomp.quantizer import QuantParams
from actcomp.tensorio import ActivationTensor, DType

import pseudocode_oracle as oracle


# ---------------------------------------------------------------------------
# exp-Golomb golden vectors and oracle agreement
# ---------------------------------------------------------------------------

def test_eg_golden_vectors():
    assert eg_encode(0, 0) == "1"
    assert eg_encode(3, 0) == "00100"
    assert eg_encode(0, 4) == "10000"
    assert len(eg_encode(0, 4)) == 5
    assert eg_encode(0, 8) == "1" + "0" * 8
    assert len(eg_encode(0, 8)) == 9


def test_eg_decode_golden_vectors():
    assert eg_decode("111", 0) == (0, 1)
    assert eg_decode("00100101", 0) == (3, 5)
    assert eg_decode("10000011", 4) == (0, 5)


def test_seg_golden_vectors():
    assert seg_encode(0, 12) == "1"
    assert seg_encode(0, 0) == "1"
    # "0" ++ eg_encode(4, 2) where eg_encode(4, 2) == "01000"
    assert eg_encode(4, 2) == "01000"
    assert seg_encode(5, 2) == "001000"


def test_seg_decode_golden_vectors():
    assert seg_decode("1011", 8) == (0, 1)
    assert seg_decode("0" + eg_encode(0, 4) + "101", 4) == (1, 6)
    assert seg_decode("1", 0) == (0, 1)


def test_table1_code_lengths():
    eg_lengths = [len(eg_encode(0, k)) for k in (0, 4, 8, 12)]
    seg_lengths = [len(seg_encode(0, k)) for k in (0, 4, 8, 12)]
    assert eg_lengths == [1, 5, 9, 13]
    assert seg_lengths == [1, 1, 1, 1]


def test_matches_pseudocode_oracle_exhaustively():
    for k in range(0, 16):
        for x in range(0, 300):
            enc = eg_encode(x, k)
            assert enc == oracle.encode_exp_golomb(x, k)
            assert eg_decode(enc + "1010", k) == oracle.decode_exp_golomb(enc + "1010", k)
            s = seg_encode(x, k)
            assert s == oracle.encode_sparse_exp_golomb(x, k)
            assert seg_decode(s + "01", k) == oracle.decode_sparse_exp_golomb(s + "01", k)


def test_eg_length_law_sampled():
    for x in [0, 1, 2, 3, 7, 8, 100, 2 ** 10, 2 ** 16 - 1, 123456]:
        assert eg_code_length(x, 0) == 2 * int(math.floor(math.log2(x + 1))) + 1
        assert len(eg_encode(x, 0)) == eg_code_length(x, 0)


def test_seg_length_law():
    for k in range(1, 16):
        assert seg_code_length(0, k) == 1
        for x in (1, 5, 77, 4095):
            assert seg_code_length(x, k) == 1 + eg_code_length(x - 1, k)
            assert len(seg_encode(x, k)) == seg_code_length(x, k)


def test_truncation_errors():
    with pytest.raises(TruncationError):
        eg_decode("00", 0)  # no terminating 1
    with pytest.raises(TruncationError):
        eg_decode("001", 0)  # codeword needs 5 bits
    with pytest.raises(TruncationError):
        seg_decode("", 4)
    with pytest.raises(TruncationError):
        seg_decode("01", 4)  # flag + truncated EG codeword


def test_negative_values_rejected():
    with pytest.raises(ValueError):
        eg_encode(-1, 0)
    with pytest.raises(ValueError):
        seg_encode(-2, 3)


# ---------------------------------------------------------------------------
# vectorized streams agree with the scalar coders
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("k", [0, 1, 2, 7, 15])
def test_stream_encode_matches_scalar_concatenation(k):
    rng = np.random.default_rng(17 + k)
    values = rng.integers(0, 5000, size=400)
    values[rng.random(size=400) < 0.5] = 0

    concat = "".join(seg_encode(int(v), k) for v in values)
    payload, nbits = seg_encode_stream(values, k)
    assert nbits == len(concat)
    assert payload == np.packbits(
        np.frombuffer(concat.encode(), dtype=np.uint8) - ord("0")).tobytes()
    assert np.array_equal(seg_decode_stream(payload, nbits, values.size, k), values)

    concat_eg = "".join(eg_encode(int(v), k) for v in values)
    payload_eg, nbits_eg = eg_encode_stream(values, k)
    assert nbits_eg == len(concat_eg)
    assert np.array_equal(
        eg_decode_stream(payload_eg, nbits_eg, values.size, k), values)

    assert eg_stream_bits(values, k) == nbits_eg
    assert seg_stream_bits(values, k) == nbits


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.integers(0, 2 ** 16 - 1), max_size=200),
    st.integers(0, 15),
)
def test_prefix_freeness_property(values, k):
    """Concatenated codewords decode back with zero slack bits."""
    arr = np.array(values, dtype=np.int64)
    payload, nbits = seg_encode_stream(arr, k)
    assert np.array_equal(seg_decode_stream(payload, nbits, arr.size, k), arr)
    payload, nbits = eg_encode_stream(arr, k)
    assert np.array_equal(eg_decode_stream(payload, nbits, arr.size, k), arr)


def test_stream_truncation_detected():
    payload, nbits = seg_encode_stream(np.array([5, 6, 7]), 2)
    with pytest.raises(TruncationError):
        seg_decode_stream(payload, nbits - 2, 3, 2)


def test_ten_thousand_symbol_streams_round_trip():
    rng = np.random.default_rng(99)
    m = 10_000
    values = rng.integers(0, 1 << 16, size=m)
    values[rng.random(m) < 0.7] = 0
    for k in (0, 5, 13):
        payload, nbits = seg_encode_stream(values, k)
        assert np.array_equal(seg_decode_stream(payload, nbits, m, k), values)
        payload, nbits = eg_encode_stream(values, k)
        assert np.array_equal(eg_decode_stream(payload, nbits, m, k), values)
    assert np.array_equal(zvc_decode(zvc_encode(values, 16)), values)


# ---------------------------------------------------------------------------
# ZVC
# ---------------------------------------------------------------------------

def test_zvc_all_zero():
    blob = zvc_encode(np.zeros(4, dtype=np.int64), 8)
    assert blob.payload_bits == 4
    assert blob.payload == bytes([0b0000_0000])
    assert np.array_equal(zvc_decode(blob), np.zeros(4, dtype=np.int64))


def test_zvc_layout_golden():
    blob = zvc_encode(np.array([0, 0, 3, 0]), 8)
    assert blob.payload_bits == 12
    # mask 0010 then 0b00000011, zero padded
    assert blob.payload == bytes([0b0010_0000, 0b0011_0000])
    assert np.array_equal(zvc_decode(blob), [0, 0, 3, 0])


def test_zvc_size_formula():
    rng = np.random.default_rng(5)
    values = np.zeros(1000, dtype=np.int64)
    idx = rng.choice(1000, size=200, replace=False)
    values[idx] = rng.integers(1, 2 ** 16, size=200)
    blob = zvc_encode(values, 16)
    assert blob.payload_bits == 1000 + 16 * 200 == 4200
    assert np.array_equal(zvc_decode(blob), values)


def test_zvc_empty_and_random_round_trip():
    assert zvc_decode(zvc_encode(np.array([], dtype=np.int64), 8)).size == 0
    rng = np.random.default_rng(6)
    for q in (8, 12, 16):
        v = rng.integers(0, 1 << q, size=777)
        v[rng.random(777) < 0.6] = 0
        assert np.array_equal(zvc_decode(zvc_encode(v, q)), v)


def test_zvc_range_error():
    with pytest.raises(ValueError):
        zvc_encode(np.array([256]), 8)


def test_zvc_corruption_detected():
    blob = zvc_encode(np.array([0, 1, 2, 0]), 8)
    bad = EncodedBlob(
        codec=blob.codec, q=blob.q, n_symbols=blob.n_symbols,
        payload_bits=blob.payload_bits - 8, payload=blob.payload[:-1],
        side_band=blob.side_band,
    )
    with pytest.raises(CorruptionError):
        zvc_decode(bad)


# ---------------------------------------------------------------------------
# Huffman
# ---------------------------------------------------------------------------

def test_huffman_degenerate_single_symbol():
    table = huffman_build({0: 1}, 8)
    codes = table.codes()
    assert set(codes) == {0, escape_symbol(8)}
    assert codes[0][1] == 1
    assert codes[escape_symbol(8)][1] == 1


def test_huffman_two_symbol_optimality():
    table = huffman_build({0: 3, 1: 1}, 8)
    codes = table.codes()
    assert codes[0][1] == 1
    assert codes[1][1] >= 1
    assert table.kraft_sum() <= 1.0


def test_huffman_uniform_256():
    hist = {s: 100 for s in range(256)}
    table = huffman_build(hist, 8)
    lengths = [l for sym, l in table.code_lengths if sym != escape_symbol(8)]
    assert all(7 <= l <= 9 for l in lengths)
    # independent entropy oracle: uniform over 256 symbols -> 8 bits
    entropy = -sum((1 / 256) * math.log2(1 / 256) for _ in range(256))
    assert table.mean_length(hist) <= entropy + 1.0


def test_huffman_round_trip_geometric():
    rng = np.random.default_rng(23)
    values = rng.geometric(0.2, size=10_000).astype(np.int64) - 1
    values = np.minimum(values, 4095)
    table = huffman_build(np.bincount(values), 12)
    blob = huffman_encode(values, table)
    assert np.array_equal(huffman_decode(blob), values)


def test_huffman_all_zero_payload_one_bit_per_symbol():
    n = 2048
    values = np.zeros(n, dtype=np.int64)
    table = huffman_build({0: n}, 16)
    blob = huffman_encode(values, table)
    assert blob.payload_bits == n
    assert np.array_equal(huffman_decode(blob), values)


def test_huffman_escape_round_trip():
    table = huffman_build({1: 10, 2: 5}, 8)
    values = np.array([1, 2, 200, 1, 255, 2], dtype=np.int64)  # 200, 255 unseen
    blob = huffman_encode(values, table)
    assert np.array_equal(huffman_decode(blob), values)


def test_huffman_kraft_inequality():
    rng = np.random.default_rng(29)
    hist = {int(s): int(c) for s, c in enumerate(rng.integers(1, 1000, size=50))}
    table = huffman_build(hist, 8)
    assert table.kraft_sum() <= 1.0 + 1e-12


def test_huffman_corrupt_side_band():
    table = huffman_build({0: 4, 1: 2}, 8)
    blob = huffman_encode(np.array([0, 1, 0]), table)
    bad = EncodedBlob(
        codec=blob.codec, q=blob.q, n_symbols=blob.n_symbols,
        payload_bits=blob.payload_bits, payload=blob.payload,
        side_band=blob.side_band[:-3],
    )
    with pytest.raises(CorruptionError):
        huffman_decode(bad)


# ---------------------------------------------------------------------------
# tensor drivers, gains, blob container
# ---------------------------------------------------------------------------

def _quantized_tensor(values, q=16, dims=None):
    values = np.asarray(values, dtype=np.uint16 if q > 8 else np.uint8)
    if dims is None:
        dims = (1, 1, 1, values.size)
    dtype = {8: DType.U8, 12: DType.U12, 16: DType.U16}[q]
    return ActivationTensor(
        layer_name="t", dims=dims, dtype=dtype, data=values.reshape(dims),
        quant=QuantParams(q=q, x_max=1.0),
    )


def test_encode_tensor_all_zero_seg():
    t = _quantized_tensor(np.zeros(500, dtype=np.uint16), q=16)
    blob = encode_tensor(t, CodecId(CodecTag.SEG, k=13))
    assert blob.payload_bits == 500  # one '1' per element
    assert np.array_equal(decode_tensor(blob), t.values())


def test_encode_tensor_raw_passthrough_bits():
    t = _quantized_tensor(np.arange(300) % 251, q=8)
    blob = encode_tensor(t, CodecId(CodecTag.RAW))
    assert blob.payload_bits == 300 * 8
    assert np.array_equal(decode_tensor(blob), t.values())
    assert compression_gain(300 * 8, blob) == 1.0


def test_encode_tensor_float_passthrough():
    data = np.abs(np.random.default_rng(1).normal(size=60)).astype(np.float32)
    t = ActivationTensor(
        layer_name="f", dims=(1, 1, 1, 60), dtype=DType.F32,
        data=data.reshape(1, 1, 1, 60),
    )
    blob = encode_tensor(t, CodecId(CodecTag.RAW))
    assert blob.q == 0
    assert blob.payload_bits == 60 * 32
    assert np.array_equal(decode_tensor(blob), data)
    with pytest.raises(ConfigError):
        encode_tensor(t, CodecId(CodecTag.SEG, k=4))


def test_sparse_tensor_seg_beats_eg():
    rng = np.random.default_rng(41)
    values = rng.integers(0, 2 ** 16, size=20_000)
    values[rng.random(20_000) < 0.7] = 0
    best_seg = min(seg_stream_bits(values, k) for k in range(16))
    best_eg = min(eg_stream_bits(values, k) for k in range(16))
    assert best_seg < best_eg


def test_round_trip_all_codecs_quantized():
    rng = np.random.default_rng(43)
    for q in (8, 12, 16):
        values = rng.integers(0, 1 << q, size=3000).astype(np.int64)
        values[rng.random(3000) < 0.5] = 0
        t = _quantized_tensor(values, q=q)
        for codec in (CodecId(CodecTag.EG, 3), CodecId(CodecTag.SEG, 9),
                      CodecId(CodecTag.ZVC), CodecId(CodecTag.HUFFMAN),
                      CodecId(CodecTag.RAW)):
            blob = encode_tensor(t, codec)
            assert blob.n_symbols == 3000
            assert np.array_equal(decode_tensor(blob), t.values())
            # container round trip preserves everything
            again = blob_from_bytes(blob_to_bytes(blob))
            assert again.codec == blob.codec
            assert again.q == blob.q
            assert again.n_symbols == blob.n_symbols
            assert again.payload_bits == blob.payload_bits
            assert again.payload == blob.payload
            assert again.side_band == blob.side_band


def test_compression_gain_arithmetic():
    blob = EncodedBlob(
        codec=CodecId(CodecTag.SEG, 4), q=16, n_symbols=100,
        payload_bits=800, payload=bytes(100),
    )
    assert compression_gain(100 * 16, blob) == pytest.approx(2.0)
    assert compression_gain(100 * 16, blob, include_quantization=True) \
        == pytest.approx(4.0)


def test_compression_gain_counts_side_band():
    blob = EncodedBlob(
        codec=CodecId(CodecTag.HUFFMAN), q=8, n_symbols=10,
        payload_bits=40, payload=bytes(5), side_band=bytes(5),
    )
    assert compression_gain(80, blob) == pytest.approx(80 / (40 + 40))


def test_compression_gain_zero_payload_error():
    blob = EncodedBlob(
        codec=CodecId(CodecTag.SEG), q=16, n_symbols=0,
        payload_bits=0, payload=b"",
    )
    with pytest.raises(ValueError):
        compression_gain(0, blob)


def test_blob_container_errors():
    t = _quantized_tensor([0, 1, 2, 3], q=8)
    raw = blob_to_bytes(encode_tensor(t, CodecId(CodecTag.SEG, 2)))
    with pytest.raises(FormatError):
        blob_from_bytes(b"XXXX" + raw[4:])
    with pytest.raises(FormatError):
        blob_from_bytes(raw[:-1])
    bad_version = raw[:4] + bytes([9]) + raw[5:]
    with pytest.raises(FormatError):
        blob_from_bytes(bad_version)


def test_zlib_baseline_sane():
    values = np.zeros(4000, dtype=np.int64)
    bits = codecs.zlib_stream_bits(values, 16)
    assert 0 < bits < 4000 * 16
