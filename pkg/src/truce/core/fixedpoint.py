"""Fixed-point encoding into the ring Z_{2^ring_bits}.

All evaluation modes (plaintext and secret-shared) operate on the same
fixed-point representation so that they produce bit-identical logits.
Negative values use the two's-complement embedding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class FixedPointError(ValueError):
    """Value cannot be represented at the configured precision."""


@dataclass(frozen=True)
class FixedPointConfig:
    """Precision parameters shared by every party in a session.

    f: fractional bits; ring_bits: ring width (64 in production, smaller
    rings only for exhaustive tests).
    """

    f: int = 12
    ring_bits: int = 64

    def __post_init__(self):
        if not (0 < self.f < self.ring_bits - 2):
            raise FixedPointError(
                f"need 0 < f < ring_bits - 2, got f={self.f} ring_bits={self.ring_bits}"
            )
        if self.ring_bits > 64:
            raise FixedPointError("ring_bits > 64 not supported")

    @property
    def modulus(self) -> int:
        return 1 << self.ring_bits

    @property
    def mask(self) -> int:
        return (1 << self.ring_bits) - 1

    @property
    def scale(self) -> int:
        return 1 << self.f

    @property
    def max_abs(self) -> float:
        # representable magnitude bound: |v| < 2^(ring_bits - f - 1)
        return float(1 << (self.ring_bits - self.f - 1))


DEFAULT_CONFIG = FixedPointConfig()


def encode_fixed(value: float, cfg: FixedPointConfig = DEFAULT_CONFIG) -> int:
    """Encode a real value as round(value * 2^f) mod 2^ring_bits."""
    if not math.isfinite(value):
        raise FixedPointError(f"non-finite value: {value!r}")
    if abs(value) >= cfg.max_abs:
        raise FixedPointError(f"value {value} out of range for f={cfg.f}")
    return round(value * cfg.scale) % cfg.modulus


def decode_fixed(elem: int, cfg: FixedPointConfig = DEFAULT_CONFIG) -> float:
    """Decode a ring element back to a real value (two's complement)."""
    elem %= cfg.modulus
    if elem >= cfg.modulus // 2:
        elem -= cfg.modulus
    return elem / cfg.scale


def to_signed(elem: int, cfg: FixedPointConfig = DEFAULT_CONFIG) -> int:
    elem %= cfg.modulus
    return elem - cfg.modulus if elem >= cfg.modulus // 2 else elem


def encode_array(values, cfg: FixedPointConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Vectorized encode; returns uint64 array of ring elements."""
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise FixedPointError("non-finite value in array")
    if np.any(np.abs(arr) >= cfg.max_abs):
        raise FixedPointError("value out of range")
    scaled = np.rint(arr * cfg.scale).astype(np.int64)
    return (scaled.astype(np.uint64)) & np.uint64(cfg.mask)


def decode_array(elems: np.ndarray, cfg: FixedPointConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Vectorized decode of ring elements to float64."""
    return signed_view(elems, cfg).astype(np.float64) / cfg.scale


def signed_view(elems: np.ndarray, cfg: FixedPointConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Interpret ring elements as signed integers (int64)."""
    e = np.ascontiguousarray(np.asarray(elems, dtype=np.uint64) & np.uint64(cfg.mask))
    if cfg.ring_bits == 64:
        return e.view(np.int64)
    half = np.uint64(1 << (cfg.ring_bits - 1))
    out = e.astype(np.int64)
    out[e >= half] -= 1 << cfg.ring_bits
    return out


def truncate_signed(elems: np.ndarray, f: int, cfg: FixedPointConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Arithmetic right shift by f bits in two's complement.

    This is the plaintext-equivalent truncation rule; the MPC local
    truncation reproduces it to within 1 ulp.
    """
    s = signed_view(elems, cfg)
    shifted = s >> np.int64(f)
    return shifted.astype(np.uint64) & np.uint64(cfg.mask)


def quantize(value: float, cfg: FixedPointConfig = DEFAULT_CONFIG) -> float:
    """Snap a real value onto the fixed-point grid (multiples of 2^-f)."""
    return decode_fixed(encode_fixed(value, cfg), cfg)
