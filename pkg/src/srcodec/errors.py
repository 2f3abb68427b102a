"""Exception types shared across the codec."""


class CodecError(RuntimeError):
    """Content codec failure; message carries the process diagnostics."""


class StreamFormatError(ValueError):
    """Model-stream header is malformed (bad magic, version, or geometry)."""


class StreamDecodeError(ValueError):
    """Model-stream payload is truncated or otherwise undecodable."""


class StreamCorruptionError(StreamDecodeError):
    """Model-stream record carries out-of-range or inconsistent data."""


class TrainingError(RuntimeError):
    """Segment training failed (e.g. non-finite gradients)."""
