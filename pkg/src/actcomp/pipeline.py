"""End-to-end orchestration: calibration, k-search, compression, reports.

A compression run quantizes every evaluation tensor with parameters taken
from a disjoint calibration set, encodes it with each requested codec,
decodes it back and verifies losslessness before any report is written.
Aggregate gain is total raw bits over total compressed bits, not a mean of
per-layer ratios.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .codecs import (
    CodecId,
    CodecTag,
    decode_tensor,
    eg_stream_bits,
    encode_tensor,
    load_blob,
    save_blob,
    seg_stream_bits,
    zlib_stream_bits,
)
from .errors import ConfigError, CorruptionError, FormatError
from .quantizer import QuantParams, calibrate_max, quantize
from .tensorio import (
    ActivationTensor,
    DType,
    load_tensor,
    nonzero_fraction,
    read_manifest,
    save_tensor,
)

BLOB_MANIFEST = "blobs.jsonl"
_QUANT_DTYPE = {8: DType.U8, 12: DType.U12, 16: DType.U16}


def calibrate_dump(cal_dir: str | Path, q: int) -> dict[str, QuantParams]:
    """Per-layer calibration maxima over a dump of float tensors."""
    cal_dir = Path(cal_dir)
    maxima: dict[str, float] = {}
    for e in read_manifest(cal_dir):
        t = load_tensor(cal_dir / e.path)
        m = float(t.data.max()) if t.element_count else 0.0
        maxima[e.layer] = max(maxima.get(e.layer, 0.0), m)
    if not maxima:
        raise ConfigError("calibration dump is empty")
    return {layer: calibrate_max([np.array([m])], q) for layer, m in maxima.items()}


def quantized_values(t: ActivationTensor, params: dict[str, QuantParams] | None):
    """Flat integer symbols plus the params actually used for tensor t."""
    if t.dtype == DType.F32:
        if params is None or t.layer_name not in params:
            raise ConfigError(
                f"float tensor {t.layer_name!r} needs calibration parameters"
            )
        p = params[t.layer_name]
        return quantize(t.values(), p), p
    return t.values(), t.quant


def search_k(training_tensors, codec: CodecTag, k_range=range(0, 16)) -> int:
    """k minimizing total encoded bits over the training set; ties go low.

    training_tensors: iterable of integer symbol arrays (quantized).
    """
    if codec not in (CodecTag.EG, CodecTag.SEG):
        raise ConfigError(f"k-search applies to EG/SEG, not {codec.name}")
    size_fn = eg_stream_bits if codec == CodecTag.EG else seg_stream_bits
    tensors = [np.asarray(t).reshape(-1) for t in training_tensors]
    if not tensors or all(t.size == 0 for t in tensors):
        raise ConfigError("k-search needs at least one non-empty tensor")
    best_k = None
    best_bits = None
    for k in k_range:
        bits = sum(size_fn(t, k) for t in tensors)
        if best_bits is None or bits < best_bits:
            best_k, best_bits = k, bits
    return best_k


def search_k_dump(cal_dir: str | Path, codec: CodecTag, q: int,
                  params: dict[str, QuantParams] | None = None,
                  k_range=range(0, 16)) -> int:
    """k-search over a dump directory, quantizing floats on the fly.

    Float calibration dumps are quantized with their own maxima (they are
    the training set).
    """
    cal_dir = Path(cal_dir)
    entries = read_manifest(cal_dir)
    needs_params = any(
        load_tensor(cal_dir / e.path).dtype == DType.F32 for e in entries[:1]
    )
    if needs_params and params is None:
        params = calibrate_dump(cal_dir, q)
    values = [
        quantized_values(load_tensor(cal_dir / e.path), params)[0]
        for e in entries
    ]
    return search_k(values, codec, k_range)


@dataclass
class TensorRecord:
    """Per-tensor accounting used for aggregates and stability checks."""

    path: str
    layer: str
    batch: int
    n: int
    nnz: int
    raw_bits: int
    codec_bits: dict[str, int]


@dataclass
class LayerRow:
    layer: str
    n_symbols: int
    nonzero_fraction: float
    entropy_bits: float
    codec_bits: dict[str, int]
    ks: dict[str, int]

    def gains(self, q: int, source_bits: int = 32) -> dict[str, dict[str, float]]:
        raw = self.n_symbols * q
        out = {}
        for name, bits in self.codec_bits.items():
            eo = raw / bits if bits else float("inf")
            out[name] = {"entropy_only": eo, "total": eo * source_bits / q}
        return out


@dataclass
class CompressionReport:
    variant: str
    q: int
    source_bits: int
    codec_names: list[str]
    chosen_k: dict[str, int]
    rows: list[LayerRow]
    aggregate: LayerRow
    records: list[TensorRecord] = field(default_factory=list)


def _entropy_bits(counts: np.ndarray) -> float:
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts[counts > 0] / total
    return float(-(p * np.log2(p)).sum())


def _resolve_codecs(codecs, cal_dir, q, params) -> list[CodecId]:
    resolved = []
    for spec in codecs:
        if isinstance(spec, CodecId):
            resolved.append(spec)
            continue
        tag, k = spec
        if k is None:
            if cal_dir is None:
                raise ConfigError(f"auto k for {tag.name} needs a calibration dump")
            k = search_k_dump(cal_dir, tag, q, params=params)
        resolved.append(CodecId(tag, k))
    return resolved


def _blob_rel_path(codec: CodecId, layer: str, batch: int) -> str:
    return f"{codec.name}/{layer}/{batch:04d}.segb"


def _compress_one(args):
    """Worker: quantize, encode per codec, verify, write blobs."""
    (eval_dir, out_dir, entry_path, layer, batch, params, codecs, q,
     with_zlib) = args
    t = load_tensor(Path(eval_dir) / entry_path)
    values, p = quantized_values(t, params)
    symbols = values.astype(np.int64)
    if p.q != q:
        raise ConfigError(
            f"{entry_path}: tensor quantized at {p.q} bits, run expects {q}"
        )
    codec_bits = {}
    for codec in codecs:
        qt = ActivationTensor(
            layer_name=layer, dims=t.dims, dtype=_QUANT_DTYPE[q],
            data=values.reshape(t.dims), quant=p,
        )
        blob = encode_tensor(qt, codec)
        decoded = decode_tensor(blob)
        if not np.array_equal(decoded.astype(np.int64), symbols):
            raise CorruptionError(
                f"round-trip mismatch for {entry_path} under {codec.name}"
            )
        rel = _blob_rel_path(codec, layer, batch)
        dest = Path(out_dir) / rel
        dest.parent.mkdir(parents=True, exist_ok=True)
        save_blob(blob, dest)
        codec_bits[codec.name] = blob.compressed_bits
    if with_zlib:
        codec_bits["zlib"] = zlib_stream_bits(symbols, q)
    uniq, counts = np.unique(symbols, return_counts=True)
    record = TensorRecord(
        path=entry_path, layer=layer, batch=batch, n=symbols.size,
        nnz=int(np.count_nonzero(symbols)), raw_bits=symbols.size * q,
        codec_bits=codec_bits,
    )
    meta = {
        "dims": list(t.dims),
        "x_max": p.x_max,
        "role": "blob",
        "source": entry_path,
    }
    return record, uniq, counts, meta


def compress_dump(eval_dir: str | Path, out_dir: str | Path, codecs, q: int,
                  cal_dir: str | Path | None = None, jobs: int = 1,
                  with_zlib: bool = True, variant: str = "model",
                  source_bits: int = 32) -> CompressionReport:
    """Quantize + encode a dump with each codec; verify; build the report.

    codecs: iterable of CodecId or (CodecTag, k-or-None) pairs; None means
    search k on the calibration dump (Table-style protocol: parameters are
    always selected on data disjoint from the evaluation dump).
    """
    eval_dir, out_dir = Path(eval_dir), Path(out_dir)
    entries = read_manifest(eval_dir)
    if not entries:
        raise ConfigError("evaluation dump is empty")
    first = load_tensor(eval_dir / entries[0].path)
    params = None
    if first.dtype == DType.F32:
        if cal_dir is None:
            raise ConfigError("float dumps need --train-manifest calibration data")
        params = calibrate_dump(cal_dir, q)
    resolved = _resolve_codecs(codecs, cal_dir, q, params)
    out_dir.mkdir(parents=True, exist_ok=True)

    tasks = [
        (str(eval_dir), str(out_dir), e.path, e.layer, e.batch, params,
         resolved, q, with_zlib)
        for e in entries
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_compress_one, tasks, chunksize=1))
    else:
        results = [_compress_one(t) for t in tasks]

    codec_names = [c.name for c in resolved] + (["zlib"] if with_zlib else [])
    chosen_k = {c.name: c.k for c in resolved}
    hists: dict[str, np.ndarray] = {}
    layer_bits: dict[str, dict[str, int]] = {}
    layer_n: dict[str, int] = {}
    layer_nnz: dict[str, int] = {}
    records = []
    blob_rows = []
    for (record, uniq, counts, meta), entry in zip(results, entries):
        records.append(record)
        hist = hists.setdefault(record.layer, np.zeros(1 << q, dtype=np.int64))
        hist[uniq] += counts
        bits = layer_bits.setdefault(record.layer,
                                     {name: 0 for name in codec_names})
        for name, b in record.codec_bits.items():
            bits[name] += b
        layer_n[record.layer] = layer_n.get(record.layer, 0) + record.n
        layer_nnz[record.layer] = layer_nnz.get(record.layer, 0) + record.nnz
        for codec in resolved:
            blob_rows.append({
                "path": _blob_rel_path(codec, record.layer, record.batch),
                "layer": record.layer,
                "batch": record.batch,
                "role": "blob",
                "codec": codec.name,
                "k": codec.k,
                "q": q,
                "n_symbols": record.n,
                "dims": meta["dims"],
                "x_max": meta["x_max"],
                "source": meta["source"],
            })

    with open(out_dir / BLOB_MANIFEST, "w", encoding="utf-8") as fh:
        for row in blob_rows:
            fh.write(json.dumps(row) + "\n")

    layers = []
    for layer in dict.fromkeys(e.layer for e in entries):  # stable order
        layers.append(LayerRow(
            layer=layer, n_symbols=layer_n[layer],
            nonzero_fraction=layer_nnz[layer] / layer_n[layer],
            entropy_bits=_entropy_bits(hists[layer]),
            codec_bits=layer_bits[layer], ks=chosen_k,
        ))
    total_hist = sum(hists.values())
    aggregate = LayerRow(
        layer="__all__",
        n_symbols=sum(layer_n.values()),
        nonzero_fraction=sum(layer_nnz.values()) / sum(layer_n.values()),
        entropy_bits=_entropy_bits(total_hist),
        codec_bits={
            name: sum(layer_bits[l][name] for l in layer_bits)
            for name in codec_names
        },
        ks=chosen_k,
    )
    return CompressionReport(
        variant=variant, q=q, source_bits=source_bits, codec_names=codec_names,
        chosen_k=chosen_k, rows=layers, aggregate=aggregate, records=records,
    )


def aggregate_gain(records, codec_name: str, q: int, subset=None,
                   include_quantization: bool = True,
                   source_bits: int = 32) -> float:
    """Summed-bits gain over (a subset of) per-tensor records."""
    chosen = records if subset is None else [records[i] for i in subset]
    raw = sum(r.raw_bits for r in chosen)
    compressed = sum(r.codec_bits[codec_name] for r in chosen)
    if compressed == 0:
        raise ValueError("gain undefined for empty compressed size")
    gain = raw / compressed
    if include_quantization:
        gain *= source_bits / q
    return gain


def split_stability(report: CompressionReport, codec_name: str,
                    fraction: float = 0.5, seed: int = 0) -> tuple[float, float, float]:
    """Gain on a random subset of evaluation batches vs the full dump.

    The split selects evaluation batches (every layer's tensors for the
    chosen batches), i.e. it shrinks the evaluation set the way a smaller
    benchmark would. Returns (full_gain, subset_gain, relative difference).
    """
    rng = np.random.default_rng(seed)
    batches = sorted({r.batch for r in report.records})
    size = max(1, int(round(fraction * len(batches))))
    chosen = set(rng.choice(batches, size=size, replace=False).tolist())
    subset = [i for i, r in enumerate(report.records) if r.batch in chosen]
    full = aggregate_gain(report.records, codec_name, report.q)
    part = aggregate_gain(report.records, codec_name, report.q, subset=subset)
    return full, part, abs(part - full) / full


# ---------------------------------------------------------------------------
# Report serialization
# ---------------------------------------------------------------------------

def report_to_json_dict(report: CompressionReport) -> dict:
    def row_dict(row: LayerRow) -> dict:
        return {
            "layer": row.layer,
            "n_symbols": row.n_symbols,
            "nonzero_fraction": row.nonzero_fraction,
            "entropy_bits": row.entropy_bits,
            "compressed_bits": row.codec_bits,
            "gains": row.gains(report.q, report.source_bits),
        }

    return {
        "variant": report.variant,
        "q": report.q,
        "source_bits": report.source_bits,
        "codecs": report.codec_names,
        "chosen_k": report.chosen_k,
        "layers": [row_dict(r) for r in report.rows],
        "aggregate": row_dict(report.aggregate),
        # plot-ready per-layer series: layer index vs nonzero % and gain
        "series": {
            "layers": [r.layer for r in report.rows],
            "nonzero_pct": [100.0 * r.nonzero_fraction for r in report.rows],
            "total_gain": {
                name: [r.gains(report.q, report.source_bits)[name]["total"]
                       for r in report.rows]
                for name in report.codec_names
            },
        },
    }


def write_report(report: CompressionReport, out_dir: str | Path) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "report.json"
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(report_to_json_dict(report), fh, indent=2)
        fh.write("\n")
    csv_path = out_dir / "report.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "layer", "codec", "k", "q", "n_symbols", "nonzero_fraction",
            "entropy_bits", "compressed_bits", "entropy_only_gain", "total_gain",
        ])
        for row in report.rows + [report.aggregate]:
            gains = row.gains(report.q, report.source_bits)
            for name in report.codec_names:
                writer.writerow([
                    row.layer, name, report.chosen_k.get(name, ""), report.q,
                    row.n_symbols, f"{row.nonzero_fraction:.6f}",
                    f"{row.entropy_bits:.4f}", row.codec_bits[name],
                    f"{gains[name]['entropy_only']:.4f}",
                    f"{gains[name]['total']:.4f}",
                ])
    return csv_path, json_path


# ---------------------------------------------------------------------------
# Decompression / verification
# ---------------------------------------------------------------------------

def read_blob_manifest(blob_dir: str | Path) -> list[dict]:
    path = Path(blob_dir) / BLOB_MANIFEST
    if not path.exists():
        raise FormatError(f"no {BLOB_MANIFEST} in {blob_dir}")
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rows.append(json.loads(line))
    return rows


def decompress_dump(blob_dir: str | Path, out_dir: str | Path | None = None,
                    verify_dir: str | Path | None = None,
                    codec_name: str | None = None) -> int:
    """Decode blobs back to quantized tensors; optionally write and verify.

    Verification compares decoded symbols against the reference dump;
    float32 references are re-quantized with the recorded parameters first.
    Returns the number of blobs processed; raises CorruptionError on the
    first mismatch.
    """
    blob_dir = Path(blob_dir)
    rows = read_blob_manifest(blob_dir)
    if codec_name is not None:
        rows = [r for r in rows if r["codec"] == codec_name]
    if not rows:
        raise ConfigError("no blobs selected")
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
    count = 0
    for row in rows:
        blob = load_blob(blob_dir / row["path"])
        values = decode_tensor(blob)
        q = row["q"]
        params = QuantParams(q=q, x_max=row["x_max"])
        dims = tuple(row["dims"])
        tensor = ActivationTensor(
            layer_name=row["layer"], dims=dims, dtype=_QUANT_DTYPE[q],
            data=values.reshape(dims), quant=params,
        )
        if verify_dir is not None:
            ref = load_tensor(Path(verify_dir) / row["source"])
            ref_values, _ = quantized_values(
                ref, {row["layer"]: params} if ref.dtype == DType.F32 else None)
            if not np.array_equal(ref_values.reshape(-1), values):
                raise CorruptionError(
                    f"decoded {row['path']} does not match {row['source']}"
                )
        if out_dir is not None:
            dest = out_dir / f"{row['codec']}_{row['layer']}_{row['batch']:04d}.amc1"
            save_tensor(tensor, dest)
        count += 1
    return count


# ---------------------------------------------------------------------------
# Histograms (value distributions per layer)
# ---------------------------------------------------------------------------

def histogram_report(dump_dir: str | Path, q: int,
                     params: dict[str, QuantParams] | None = None,
                     display_bins: int = 256) -> dict:
    """Per-layer value histograms (log-friendly counts) plus entropy.

    Full 2^q-bin histograms feed the entropy; counts are re-binned down to
    display_bins for q > 8 so the series stays plot-sized.
    """
    dump_dir = Path(dump_dir)
    hists: dict[str, np.ndarray] = {}
    for e in read_manifest(dump_dir):
        t = load_tensor(dump_dir / e.path)
        if t.dtype == DType.F32 and params is None:
            params = calibrate_dump(dump_dir, q)
        values, _ = quantized_values(t, params)
        hist = hists.setdefault(e.layer, np.zeros(1 << q, dtype=np.int64))
        uniq, counts = np.unique(values.astype(np.int64), return_counts=True)
        hist[uniq] += counts
    out = {"q": q, "layers": {}}
    for layer, hist in hists.items():
        if q > 8 and display_bins < hist.size:
            display = hist.reshape(display_bins, -1).sum(axis=1)
        else:
            display = hist
        total = int(hist.sum())
        out["layers"][layer] = {
            "entropy_bits": _entropy_bits(hist),
            "nonzero_fraction": float(1.0 - hist[0] / total) if total else 0.0,
            "display_bins": display.tolist(),
        }
    return out
