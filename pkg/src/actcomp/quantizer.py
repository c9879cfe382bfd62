"""Uniform linear quantization of activation maps with per-layer calibration.

Maps are non-negative post-ReLU, so the grid always starts at zero and a
zero activation quantizes to the zero code exactly; sparsity survives
quantization, which the sparse entropy coders depend on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import ConfigError

BITWIDTHS = (8, 12, 16)


@dataclass(frozen=True)
class QuantParams:
    """Bitwidth and per-layer calibration maximum. The minimum is pinned at 0."""

    q: int
    x_max: float
    x_min: float = field(default=0.0)

    def __post_init__(self) -> None:
        if self.q not in BITWIDTHS:
            raise ConfigError(f"bitwidth must be one of {BITWIDTHS}, got {self.q}")
        if not self.x_max > 0:
            raise ConfigError(f"x_max must be positive, got {self.x_max}")
        if self.x_min != 0.0:
            raise ConfigError("x_min is fixed at 0")

    @property
    def levels(self) -> int:
        return (1 << self.q) - 1


def calibrate_max(tensors: Iterable, q: int) -> QuantParams:
    """Take the maximum activation over a calibration set for one layer.

    Accepts ActivationTensor-like objects (anything with .data) or bare
    arrays. An all-zero layer calibrates to x_max = 1 so the quantization
    grid stays well defined.
    """
    x_max = None
    for t in tensors:
        data = np.asarray(getattr(t, "data", t))
        if data.size == 0:
            continue
        m = float(data.max())
        x_max = m if x_max is None else max(x_max, m)
    if x_max is None:
        raise ConfigError("calibration requires at least one non-empty tensor")
    if x_max < 0:
        raise ValueError("calibration data must be non-negative (post-ReLU)")
    if x_max == 0.0:
        x_max = 1.0
    # Snap to float32 so the value survives the container header exactly.
    return QuantParams(q=q, x_max=float(np.float32(x_max)))


def quantize(x, p: QuantParams):
    """Quantize non-negative reals onto [0, 2^q - 1].

    Values above x_max are clipped; rounding is half away from zero.
    Returns an integer array (or a Python int for scalar input).
    """
    arr = np.asarray(x, dtype=np.float64)
    if np.isnan(arr).any():
        raise ValueError("NaN activation cannot be quantized")
    scaled = np.clip(arr, 0.0, p.x_max) * (p.levels / p.x_max)
    out = np.floor(scaled + 0.5)  # half away from zero on a non-negative grid
    out = np.clip(out, 0, p.levels).astype(np.uint8 if p.q == 8 else np.uint16)
    if np.isscalar(x) or arr.ndim == 0:
        return int(out)
    return out


def dequantize(v, p: QuantParams):
    """Map integer codes back to reals on [0, x_max] (float64)."""
    arr = np.asarray(v)
    if arr.size and (arr.min() < 0 or arr.max() > p.levels):
        raise ValueError(f"code outside [0, {p.levels}]")
    out = arr.astype(np.float64) * (p.x_max / p.levels)
    if np.isscalar(v) or arr.ndim == 0:
        return float(out)
    return out
