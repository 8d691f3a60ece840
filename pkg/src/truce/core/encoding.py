"""Canonical byte encoding of data points (commitment preimage).

Layout, all big-endian:
    u32 feature count
    per feature: u64 ring element (fixed-point at the session's f)
    u32 label

The encoding is deterministic and injective over grid-quantized points,
so it can serve as the preimage of per-point commitments.
"""

from __future__ import annotations

import struct

from .fixedpoint import FixedPointConfig, DEFAULT_CONFIG, encode_fixed, decode_fixed, FixedPointError
from .types import DataPoint


class EncodingError(ValueError):
    pass


def canonical_encode(point: DataPoint, cfg: FixedPointConfig = DEFAULT_CONFIG) -> bytes:
    try:
        elems = [encode_fixed(v, cfg) for v in point.input]
    except FixedPointError as e:
        raise EncodingError(str(e)) from e
    out = bytearray(struct.pack(">I", len(elems)))
    for e in elems:
        out += struct.pack(">Q", e)
    out += struct.pack(">I", point.label)
    return bytes(out)


def canonical_decode(data: bytes, cfg: FixedPointConfig = DEFAULT_CONFIG) -> DataPoint:
    if len(data) < 8:
        raise EncodingError("truncated encoding")
    (n,) = struct.unpack_from(">I", data, 0)
    expected = 4 + 8 * n + 4
    if len(data) != expected:
        raise EncodingError(f"length {len(data)} != expected {expected}")
    feats = []
    off = 4
    for _ in range(n):
        (e,) = struct.unpack_from(">Q", data, off)
        feats.append(decode_fixed(e, cfg))
        off += 8
    (label,) = struct.unpack_from(">I", data, off)
    return DataPoint(tuple(feats), label)
