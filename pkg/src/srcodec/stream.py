"""Model-stream bitstream: initial weights plus sparse per-segment updates.

File layout (all integers big-endian):

  header (30 bytes):
      magic      4s   b"SRVC"
      version    u8   1
      M          u32  total parameter count
      F          u16  adaptive-block output channels
      P          u8   patch side
      k          u8   upscale factor
      C_g        u16  kernel-generator hidden width
      C_r        u16  regular-block hidden width
      tau_ms     u32  update interval in milliseconds (0 = one-shot)
      init_seed  u64  weight-initialization seed
      index_bits u8   ceil(log2 M)
  initial model: M float16 values in canonical flat order
  update records, one per segment, segment indices strictly increasing from 1:
      segment_index u32
      count         u32
      indices       count x index_bits bits, big-endian, zero-padded to a byte
      deltas        count x float16

Everything is lossless: decode(encode(x)) reproduces x bit-exactly, and
re-encoding the decoded stream yields the identical byte string.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .bitpack import pack_uint_bits, packed_nbytes, unpack_uint_bits
from .errors import StreamCorruptionError, StreamDecodeError, StreamFormatError
from .model import ModelConfig, param_count

MAGIC = b"SRVC"
VERSION = 1

_HEADER = struct.Struct(">4sBIHBBHHIQB")
HEADER_NBYTES = _HEADER.size  # 30
_RECORD_PREFIX = struct.Struct(">II")


def index_bits_for(m: int) -> int:
    """ceil(log2 M) as exact integer math; 0 when M == 1."""
    if m < 1:
        raise ValueError(f"parameter count must be >= 1, got {m}")
    return (m - 1).bit_length()


@dataclass(frozen=True)
class SparseUpdate:
    """One segment's model delta: parameter indices plus float16 changes."""

    segment_index: int
    indices: np.ndarray  # int64, strictly increasing, in [0, M)
    deltas: np.ndarray   # float16, one per index

    def __post_init__(self):
        object.__setattr__(self, "indices",
                           np.asarray(self.indices, dtype=np.int64))
        object.__setattr__(self, "deltas",
                           np.asarray(self.deltas, dtype=np.float16))

    def validate(self, m: int | None = None) -> None:
        if self.segment_index < 1:
            raise ValueError(f"segment index must be >= 1, got {self.segment_index}")
        if self.indices.shape != self.deltas.shape or self.indices.ndim != 1:
            raise ValueError("indices and deltas must be 1-d arrays of equal length")
        if self.indices.size:
            if np.any(np.diff(self.indices) <= 0):
                raise ValueError("indices must be strictly increasing")
            if self.indices[0] < 0:
                raise ValueError("indices must be non-negative")
            if m is not None and self.indices[-1] >= m:
                raise ValueError(f"index {self.indices[-1]} out of range for M={m}")
            if not np.all(np.isfinite(self.deltas.astype(np.float32))):
                raise ValueError("deltas must be finite float16 values")


@dataclass(frozen=True)
class StreamHeader:
    """Fixed-size stream preamble carrying geometry and bookkeeping."""

    param_total: int
    feature_channels: int
    patch_size: int
    scale: int
    generator_width: int
    regular_width: int
    tau_ms: int
    init_seed: int
    index_bits: int
    version: int = VERSION

    @classmethod
    def for_config(cls, config: ModelConfig, tau_ms: int, init_seed: int) -> "StreamHeader":
        m = param_count(config)
        return cls(param_total=m, feature_channels=config.feature_channels,
                   patch_size=config.patch_size, scale=config.scale,
                   generator_width=config.generator_width,
                   regular_width=config.regular_width,
                   tau_ms=tau_ms, init_seed=init_seed,
                   index_bits=index_bits_for(m))

    def to_model_config(self) -> ModelConfig:
        return ModelConfig(feature_channels=self.feature_channels,
                           patch_size=self.patch_size, scale=self.scale,
                           generator_width=self.generator_width,
                           regular_width=self.regular_width)

    def validate(self) -> None:
        expected = param_count(self.to_model_config())
        if self.param_total != expected:
            raise StreamFormatError(
                f"header parameter count {self.param_total} does not match "
                f"the architecture ({expected})")
        if self.index_bits != index_bits_for(self.param_total):
            raise StreamFormatError(
                f"header index_bits {self.index_bits} != "
                f"ceil(log2 {self.param_total})")

    def pack(self) -> bytes:
        return _HEADER.pack(MAGIC, self.version, self.param_total,
                            self.feature_channels, self.patch_size, self.scale,
                            self.generator_width, self.regular_width,
                            self.tau_ms, self.init_seed, self.index_bits)

    @classmethod
    def unpack(cls, data: bytes) -> "StreamHeader":
        if len(data) < HEADER_NBYTES:
            raise StreamDecodeError("stream shorter than its header")
        magic, version, m, f, p, k, cg, cr, tau_ms, seed, bits = \
            _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise StreamFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise StreamFormatError(f"unsupported stream version {version}")
        header = cls(param_total=m, feature_channels=f, patch_size=p, scale=k,
                     generator_width=cg, regular_width=cr, tau_ms=tau_ms,
                     init_seed=seed, index_bits=bits, version=version)
        header.validate()
        return header


def update_record_nbytes(count: int, index_bits: int) -> int:
    """Serialized size of one update record."""
    return _RECORD_PREFIX.size + packed_nbytes(count, index_bits) + 2 * count


def stream_nbytes(param_total: int, counts: list[int]) -> int:
    """Analytic size of a whole stream with the given per-record counts."""
    bits = index_bits_for(param_total)
    return (HEADER_NBYTES + 2 * param_total
            + sum(update_record_nbytes(c, bits) for c in counts))


def encode_stream(initial_model: np.ndarray, updates: list[SparseUpdate],
                  header: StreamHeader) -> bytes:
    """Serialize the initial float16 model and its sparse updates."""
    header.validate()
    theta0 = np.asarray(initial_model, dtype=np.float16)
    if theta0.shape != (header.param_total,):
        raise ValueError(f"initial model has shape {theta0.shape}, "
                         f"expected ({header.param_total},)")
    parts = [header.pack(), theta0.astype(">f2").tobytes()]
    last_segment = 0
    for update in updates:
        update.validate(header.param_total)
        if update.segment_index <= last_segment:
            raise ValueError("update segment indices must be strictly increasing")
        last_segment = update.segment_index
        parts.append(_RECORD_PREFIX.pack(update.segment_index, update.indices.size))
        parts.append(pack_uint_bits(update.indices.astype(np.uint64),
                                    header.index_bits))
        parts.append(update.deltas.astype(">f2").tobytes())
    return b"".join(parts)


def decode_stream(data: bytes) -> tuple[StreamHeader, np.ndarray, list[SparseUpdate]]:
    """Parse a stream back into (header, float16 initial model, updates)."""
    header = StreamHeader.unpack(data)
    offset = HEADER_NBYTES
    m = header.param_total
    if len(data) < offset + 2 * m:
        raise StreamDecodeError("stream truncated inside the initial model")
    theta0 = np.frombuffer(data, dtype=">f2", count=m, offset=offset).astype(np.float16)
    offset += 2 * m
    updates: list[SparseUpdate] = []
    last_segment = 0
    while offset < len(data):
        if len(data) < offset + _RECORD_PREFIX.size:
            raise StreamDecodeError(
                f"stream truncated in the record prefix after segment {last_segment}")
        segment, count = _RECORD_PREFIX.unpack_from(data, offset)
        offset += _RECORD_PREFIX.size
        if segment <= last_segment:
            raise StreamCorruptionError(
                f"update record for segment {segment} does not increase on "
                f"segment {last_segment}")
        idx_nbytes = packed_nbytes(count, header.index_bits)
        if len(data) < offset + idx_nbytes + 2 * count:
            raise StreamDecodeError(
                f"stream truncated inside the record for segment {segment}")
        indices = unpack_uint_bits(data[offset:offset + idx_nbytes],
                                   count, header.index_bits).astype(np.int64)
        offset += idx_nbytes
        deltas = np.frombuffer(data, dtype=">f2", count=count,
                               offset=offset).astype(np.float16)
        offset += 2 * count
        if count:
            if np.any(np.diff(indices) <= 0):
                raise StreamCorruptionError(
                    f"record for segment {segment} has non-increasing indices")
            if indices[-1] >= m:
                raise StreamCorruptionError(
                    f"record for segment {segment} addresses index "
                    f"{int(indices[-1])} >= M={m}")
        updates.append(SparseUpdate(segment, indices, deltas))
        last_segment = segment
    return header, theta0, updates


def apply_update(theta_prev: np.ndarray, update: SparseUpdate) -> np.ndarray:
    """Next transmitted state: add float16 deltas (widened) at their indices."""
    theta_prev = np.asarray(theta_prev)
    out = theta_prev.copy()
    if update.indices.size:
        if update.indices[-1] >= theta_prev.shape[0] or update.indices[0] < 0:
            raise StreamCorruptionError(
                f"update for segment {update.segment_index} addresses an index "
                f"outside [0, {theta_prev.shape[0]})")
        out[update.indices] += update.deltas.astype(theta_prev.dtype)
    return out


def model_bitrate(param_total: int, update_fraction: float,
                  tau_seconds: float) -> float:
    """Upper bound on the model-stream rate: (16 + ceil(log2 M)) * ceil(eta*M) / tau.

    This is the per-second cost of shipping ceil(eta*M) float16 deltas plus
    their bit-packed indices every tau seconds; actual file accounting uses
    true byte counts instead.
    """
    if param_total < 1:
        raise ValueError(f"parameter count must be >= 1, got {param_total}")
    if not 0.0 <= update_fraction <= 1.0:
        raise ValueError(f"update fraction must be in [0, 1], got {update_fraction}")
    if not tau_seconds > 0:
        raise ValueError(f"update interval must be positive, got {tau_seconds}")
    selected = math.ceil(update_fraction * param_total)
    return (16 + index_bits_for(param_total)) * selected / tau_seconds


def inspect_stream(data: bytes) -> str:
    """Human-readable header and per-update statistics."""
    header, theta0, updates = decode_stream(data)
    lines = [
        f"magic/version      {MAGIC.decode()} v{header.version}",
        f"parameters (M)     {header.param_total}",
        f"feature channels   {header.feature_channels}",
        f"patch size         {header.patch_size}",
        f"scale              {header.scale}",
        f"generator width    {header.generator_width}",
        f"regular width      {header.regular_width}",
        f"tau                {'one-shot' if header.tau_ms == 0 else f'{header.tau_ms} ms'}",
        f"init seed          {header.init_seed}",
        f"index bits         {header.index_bits}",
        f"initial model      {2 * header.param_total} bytes "
        f"(float16, mean {float(np.mean(theta0.astype(np.float32))):+.3e})",
        f"update records     {len(updates)}",
    ]
    for u in updates:
        d = u.deltas.astype(np.float32)
        span = (f"indices [{int(u.indices[0])}, {int(u.indices[-1])}]"
                if u.indices.size else "no indices")
        stats = (f"|delta| mean {float(np.abs(d).mean()):.3e} "
                 f"max {float(np.abs(d).max()):.3e}" if d.size else "empty")
        lines.append(
            f"  segment {u.segment_index}: {u.indices.size} updates, {span}, {stats}, "
            f"{update_record_nbytes(u.indices.size, header.index_bits)} bytes")
    return "\n".join(lines)
