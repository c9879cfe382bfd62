"""Exception taxonomy shared across the toolkit."""


class ActcompError(Exception):
    """Base class for all toolkit errors."""


class TruncationError(ActcompError):
    """A bitstream or codeword ended before the requested bits were read."""


class CorruptionError(ActcompError):
    """Decoded data is structurally inconsistent with its metadata."""


class FormatError(ActcompError):
    """A binary container failed magic/version/length validation."""


class ConfigError(ActcompError):
    """Operation invoked with an inconsistent parameter combination."""


class ConsistencyError(ActcompError):
    """Cached state (e.g. a forward trace) is stale for the requested op."""
