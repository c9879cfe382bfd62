"""Compression and acceleration toolkit for CNN activation maps.

Three stages: L1-driven activation sparsification during fine-tuning,
uniform quantization with per-layer calibration, and lossless entropy
coding built around a sparse variant of exponential-Golomb.
"""

__version__ = "0.1.0"
