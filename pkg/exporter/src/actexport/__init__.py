"""Bridge from torch models to AMC1 activation dumps."""

from .amc1 import write_manifest, write_tensor
from .hooks import HookSpec, dump_activations

__version__ = "0.1.0"

__all__ = ["HookSpec", "dump_activations", "write_manifest", "write_tensor"]
