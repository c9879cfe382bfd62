"""Datasets: a procedural digit generator and IDX file support.

The synthetic set renders seven-segment style digits with per-sample
jitter (affine warp, stroke width, intensity, noise) on 28x28 grayscale
canvases. It keeps the whole suite runnable offline while behaving like
MNIST-class data: mostly-black images, ten classes, strokes near 1.0.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import FormatError

# Seven-segment endpoints on a unit box; y grows downward.
_SEGMENTS = {
    "A": ((0.0, 0.0), (1.0, 0.0)),
    "B": ((1.0, 0.0), (1.0, 0.5)),
    "C": ((1.0, 0.5), (1.0, 1.0)),
    "D": ((0.0, 1.0), (1.0, 1.0)),
    "E": ((0.0, 0.5), (0.0, 1.0)),
    "F": ((0.0, 0.0), (0.0, 0.5)),
    "G": ((0.0, 0.5), (1.0, 0.5)),
}

_DIGIT_SEGMENTS = {
    0: "ABCDEF",
    1: "BC",
    2: "ABGED",
    3: "ABGCD",
    4: "FGBC",
    5: "AFGCD",
    6: "AFGEDC",
    7: "ABC",
    8: "ABCDEFG",
    9: "ABCDFG",
}

IMG_SIZE = 28
_BOX_W = 10.0
_BOX_H = 15.0

# Standard MNIST-style input normalization applied before training.
NORM_MEAN = 0.1307
NORM_STD = 0.3081


def _render_digit(digit: int, rng: np.random.Generator, grid: np.ndarray) -> np.ndarray:
    segs = np.array([_SEGMENTS[s] for s in _DIGIT_SEGMENTS[digit]])  # (S, 2, 2)
    pts = segs.reshape(-1, 2).copy()
    pts[:, 0] = pts[:, 0] * _BOX_W - _BOX_W / 2
    pts[:, 1] = pts[:, 1] * _BOX_H - _BOX_H / 2
    pts += rng.uniform(-0.7, 0.7, size=pts.shape)  # endpoint jitter
    theta = rng.uniform(-0.14, 0.14)
    scale = rng.uniform(0.9, 1.1)
    rot = scale * np.array([[np.cos(theta), -np.sin(theta)],
                            [np.sin(theta), np.cos(theta)]])
    pts = pts @ rot.T
    center = IMG_SIZE / 2 + rng.uniform(-2.0, 2.0, size=2)
    pts += center
    p0 = pts[0::2][:, None, :]  # (S, 1, 2)
    p1 = pts[1::2][:, None, :]
    d = p1 - p0
    seg_len2 = np.maximum((d ** 2).sum(-1, keepdims=True), 1e-9)
    t = np.clip(((grid[None] - p0) * d).sum(-1, keepdims=True) / seg_len2, 0.0, 1.0)
    nearest = p0 + t * d
    dist = np.sqrt(((grid[None] - nearest) ** 2).sum(-1)).min(axis=0)  # (P,)
    radius = rng.uniform(0.8, 1.3)
    img = np.clip((radius + 0.8 - dist) / 0.8, 0.0, 1.0)
    img *= rng.uniform(0.85, 1.0)
    img += rng.normal(0.0, 0.025, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def generate_digits(n: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """n jittered digit images; returns (images (n,28,28,1) float32, labels)."""
    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:IMG_SIZE, 0:IMG_SIZE]
    grid = np.stack([xs.reshape(-1), ys.reshape(-1)], axis=-1).astype(np.float64)
    labels = rng.integers(0, 10, size=n)
    images = np.empty((n, IMG_SIZE, IMG_SIZE, 1), dtype=np.float32)
    for i in range(n):
        img = _render_digit(int(labels[i]), rng, grid)
        images[i, :, :, 0] = img.reshape(IMG_SIZE, IMG_SIZE)
    return images, labels.astype(np.int64)


@dataclass
class DataBundle:
    """Disjoint splits: train/val for optimization, cal for calibration and
    parameter search, test for evaluation and compression dumps."""

    train_x: np.ndarray
    train_y: np.ndarray
    val_x: np.ndarray
    val_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    cal_x: np.ndarray
    cal_y: np.ndarray


def normalize_images(x: np.ndarray) -> np.ndarray:
    return ((x - NORM_MEAN) / NORM_STD).astype(np.float32)


def make_synthetic_bundle(n_train=12000, n_val=2000, n_test=2000, n_cal=1000,
                          seed=0, normalize=True) -> DataBundle:
    total = n_train + n_val + n_test + n_cal
    x, y = generate_digits(total, seed=seed)
    if normalize:
        x = normalize_images(x)
    i0, i1, i2 = n_train, n_train + n_val, n_train + n_val + n_test
    return DataBundle(
        train_x=x[:i0], train_y=y[:i0],
        val_x=x[i0:i1], val_y=y[i0:i1],
        test_x=x[i1:i2], test_y=y[i1:i2],
        cal_x=x[i2:], cal_y=y[i2:],
    )


# ---------------------------------------------------------------------------
# IDX (the classic ubyte image/label format)
# ---------------------------------------------------------------------------

def save_idx_images(path: str | Path, images: np.ndarray) -> None:
    """images: (N, H, W) or (N, H, W, 1) uint8 or float in [0, 1]."""
    if images.ndim == 4:
        images = images[..., 0]
    if images.dtype != np.uint8:
        images = np.clip(np.rint(images * 255.0), 0, 255).astype(np.uint8)
    n, h, w = images.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", 0x0803, n, h, w))
        fh.write(images.tobytes())


def save_idx_labels(path: str | Path, labels: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", 0x0801, labels.size))
        fh.write(labels.astype(np.uint8).tobytes())


def load_idx_images(path: str | Path) -> np.ndarray:
    """Returns (N, H, W, 1) float32 scaled to [0, 1]."""
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise FormatError(f"{path}: truncated IDX header")
    magic, n, h, w = struct.unpack_from(">IIII", raw, 0)
    if magic != 0x0803:
        raise FormatError(f"{path}: bad IDX image magic {magic:#x}")
    if len(raw) != 16 + n * h * w:
        raise FormatError(f"{path}: IDX payload length mismatch")
    data = np.frombuffer(raw, dtype=np.uint8, offset=16).reshape(n, h, w, 1)
    return data.astype(np.float32) / 255.0


def load_idx_labels(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise FormatError(f"{path}: truncated IDX header")
    magic, n = struct.unpack_from(">II", raw, 0)
    if magic != 0x0801:
        raise FormatError(f"{path}: bad IDX label magic {magic:#x}")
    if len(raw) != 8 + n:
        raise FormatError(f"{path}: IDX payload length mismatch")
    return np.frombuffer(raw, dtype=np.uint8, offset=8).astype(np.int64)


def load_idx_bundle(directory: str | Path, n_val=2000, n_cal=1000,
                    seed=0, normalize=True) -> DataBundle:
    """Build a bundle from standard IDX files in a directory.

    Expects train-images-idx3-ubyte / train-labels-idx1-ubyte /
    t10k-images-idx3-ubyte / t10k-labels-idx1-ubyte. Validation and
    calibration samples are split off the end of the training set.
    """
    directory = Path(directory)
    tx = load_idx_images(directory / "train-images-idx3-ubyte")
    ty = load_idx_labels(directory / "train-labels-idx1-ubyte")
    ex = load_idx_images(directory / "t10k-images-idx3-ubyte")
    ey = load_idx_labels(directory / "t10k-labels-idx1-ubyte")
    if tx.shape[0] != ty.shape[0] or ex.shape[0] != ey.shape[0]:
        raise FormatError("image/label counts disagree")
    if tx.shape[0] <= n_val + n_cal:
        raise FormatError("training set too small for the requested splits")
    if normalize:
        tx, ex = normalize_images(tx), normalize_images(ex)
    rng = np.random.default_rng(seed)
    order = rng.permutation(tx.shape[0])
    tx, ty = tx[order], ty[order]
    n_train = tx.shape[0] - n_val - n_cal
    return DataBundle(
        train_x=tx[:n_train], train_y=ty[:n_train],
        val_x=tx[n_train:n_train + n_val], val_y=ty[n_train:n_train + n_val],
        test_x=ex, test_y=ey,
        cal_x=tx[n_train + n_val:], cal_y=ty[n_train + n_val:],
    )
