"""Additive secret sharing over Z_{2^ring_bits} and XOR sharing of bits.

reconstruct(share0 + share1 mod 2^n) = secret; a single share is uniform.
"""

from __future__ import annotations

from typing import Tuple, Union

import numpy as np

from ..core import FixedPointConfig, DEFAULT_CONFIG

ArrayLike = Union[int, np.ndarray]


def share(secret: ArrayLike, rng: np.random.Generator, cfg: FixedPointConfig = DEFAULT_CONFIG) -> Tuple[np.ndarray, np.ndarray]:
    """Split a ring element (or array) into two uniform additive shares."""
    sec = np.atleast_1d(np.asarray(secret, dtype=np.uint64)) & np.uint64(cfg.mask)
    s0 = uniform_ring(rng, sec.shape, cfg)
    s1 = (sec - s0) & np.uint64(cfg.mask)
    return s0, s1


def reconstruct(s0: ArrayLike, s1: ArrayLike, cfg: FixedPointConfig = DEFAULT_CONFIG) -> np.ndarray:
    return (np.asarray(s0, dtype=np.uint64) + np.asarray(s1, dtype=np.uint64)) & np.uint64(cfg.mask)


def share_bits(secret_bits: np.ndarray, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """XOR-share a bit array: b = b0 ^ b1, single share uniform over {0,1}."""
    sec = np.asarray(secret_bits, dtype=np.uint8)
    b0 = rng.integers(0, 2, sec.shape, dtype=np.uint8)
    return b0, sec ^ b0


def reconstruct_bits(b0: np.ndarray, b1: np.ndarray) -> np.ndarray:
    return np.asarray(b0, dtype=np.uint8) ^ np.asarray(b1, dtype=np.uint8)


def uniform_ring(rng: np.random.Generator, shape, cfg: FixedPointConfig = DEFAULT_CONFIG) -> np.ndarray:
    if cfg.ring_bits == 64:
        return rng.integers(0, 2**64, shape, dtype=np.uint64)
    return rng.integers(0, 1 << cfg.ring_bits, shape, dtype=np.uint64)
