"""Fixed-width big-endian bit packing for small unsigned integers."""

from __future__ import annotations

import numpy as np


def pack_uint_bits(values: np.ndarray, bits: int) -> bytes:
    """Pack unsigned integers at ``bits`` bits each, MSB first.

    The result is zero-padded to a whole byte. ``bits = 0`` is allowed and
    produces no bytes (all values must then be zero).
    """
    if not 0 <= bits <= 64:
        raise ValueError(f"bits must be in [0, 64], got {bits}")
    v = np.asarray(values, dtype=np.uint64)
    if v.size and bits < 64 and (int(v.max()) >> bits) != 0:
        raise ValueError(f"a value does not fit in {bits} bits")
    if bits == 0:
        return b""
    shifts = np.arange(bits - 1, -1, -1, dtype=np.uint64)
    bit_rows = (v[:, None] >> shifts) & np.uint64(1)
    return np.packbits(bit_rows.astype(np.uint8).reshape(-1)).tobytes()


def unpack_uint_bits(data: bytes, count: int, bits: int) -> np.ndarray:
    """Inverse of :func:`pack_uint_bits`; returns ``count`` uint64 values."""
    if not 0 <= bits <= 64:
        raise ValueError(f"bits must be in [0, 64], got {bits}")
    if count < 0:
        raise ValueError("count must be non-negative")
    if bits == 0:
        return np.zeros(count, dtype=np.uint64)
    need_bits = count * bits
    raw = np.frombuffer(data, dtype=np.uint8)
    if raw.size * 8 < need_bits:
        raise ValueError(f"need {need_bits} bits but only {raw.size * 8} available")
    bit_arr = np.unpackbits(raw, count=need_bits).reshape(count, bits).astype(np.uint64)
    weights = np.uint64(1) << np.arange(bits - 1, -1, -1, dtype=np.uint64)
    return (bit_arr * weights).sum(axis=1, dtype=np.uint64)


def packed_nbytes(count: int, bits: int) -> int:
    """Byte length of ``count`` values packed at ``bits`` bits each."""
    return (count * bits + 7) // 8
