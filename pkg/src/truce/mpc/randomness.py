"""Correlated-randomness dealer (offline phase).

The dealer never sees any input-dependent message: it derives all
randomness from a seed, splits it into per-party bundles, and hands the
bundles out before the online protocol starts. Budgets are computed up
front from the public model architecture and dataset size; running out
mid-protocol is a fail-closed abort.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from ..core import FixedPointConfig, DEFAULT_CONFIG, ModelSpec
from ..hashing import sha256
from .sharing import share, share_bits, uniform_ring


class ProtocolAbort(RuntimeError):
    """Online protocol aborted; carries the failing step identifier."""

    def __init__(self, step: str, message: str):
        self.step = step
        super().__init__(f"[{step}] {message}")


@dataclass(frozen=True)
class Budget:
    """Counts of correlated-randomness primitives for one evaluation."""

    ring_triples: int = 0
    bit_triples: int = 0
    comparison_tuples: int = 0
    bit_ring_pairs: int = 0

    def __add__(self, other: "Budget") -> "Budget":
        return Budget(
            self.ring_triples + other.ring_triples,
            self.bit_triples + other.bit_triples,
            self.comparison_tuples + other.comparison_tuples,
            self.bit_ring_pairs + other.bit_ring_pairs,
        )

    def scaled(self, k: int) -> "Budget":
        return Budget(
            self.ring_triples * k,
            self.bit_triples * k,
            self.comparison_tuples * k,
            self.bit_ring_pairs * k,
        )


def msb_budget(cfg: FixedPointConfig) -> Budget:
    # one comparison tuple plus a ripple-borrow chain of ring_bits-1 ANDs
    return Budget(comparison_tuples=1, bit_triples=cfg.ring_bits - 1)


def onehot_and_count(d: int) -> int:
    """Bit-ANDs spent propagating one-hot flags through the argmax tournament."""
    widths = [1] * d
    total = 0
    while len(widths) > 1:
        nxt = []
        for i in range(0, len(widths) - 1, 2):
            total += widths[i] + widths[i + 1]
            nxt.append(widths[i] + widths[i + 1])
        if len(widths) % 2 == 1:
            nxt.append(widths[-1])
        widths = nxt
    return total


def argmax_budget(d: int, cfg: FixedPointConfig) -> Budget:
    if d <= 1:
        return Budget()
    per_cmp = msb_budget(cfg) + Budget(ring_triples=1, bit_ring_pairs=1)
    return per_cmp.scaled(d - 1) + Budget(bit_triples=onehot_and_count(d))


def budget_for(
    spec: ModelSpec,
    t: int,
    cfg: FixedPointConfig = DEFAULT_CONFIG,
    reveal_policy: str = "aggregate_only",
) -> Budget:
    """Published budget formula: exact primitive counts for one evaluation.

    Must stay in lockstep with the engine's consumption; verified by a
    dry-run test.
    """
    dims = spec.layer_dims
    matmul = Budget(ring_triples=sum(dims[k + 1] * dims[k] for k in range(len(dims) - 1)))
    relu = (msb_budget(cfg) + Budget(ring_triples=1, bit_ring_pairs=1)).scaled(spec.hidden_units)
    argmax = argmax_budget(spec.num_classes, cfg)
    acc = Budget(bit_triples=spec.num_classes)
    if reveal_policy == "aggregate_only":
        acc += Budget(bit_ring_pairs=1)
    return (matmul + relu + argmax + acc).scaled(t)


class Pool:
    """A pool of single-use correlated randomness with reuse detection."""

    def __init__(self, name: str, arrays: dict):
        self.name = name
        self.arrays = arrays
        self.capacity = len(next(iter(arrays.values()))) if arrays else 0
        self.cursor = 0
        self._used: set = set()

    def take(self, count: int) -> dict:
        ids = range(self.cursor, self.cursor + count)
        return self.take_ids(ids)

    def take_ids(self, ids) -> dict:
        ids = list(ids)
        if any(i in self._used for i in ids):
            raise ProtocolAbort(f"{self.name}.reuse", "correlated randomness reused")
        if not ids:
            return {k: v[0:0] for k, v in self.arrays.items()}
        if max(ids) >= self.capacity:
            raise ProtocolAbort(f"{self.name}.exhausted", "randomness budget exhausted")
        self._used.update(ids)
        self.cursor = max(self.cursor, max(ids) + 1)
        idx = np.asarray(ids, dtype=np.int64)
        return {k: v[idx] for k, v in self.arrays.items()}

    @property
    def consumed(self) -> int:
        return len(self._used)


@dataclass
class PartyBundle:
    """One party's half of the dealer's correlated randomness."""

    party_id: int
    cfg: FixedPointConfig
    ring_triples: Pool
    bit_triples: Pool
    comparison_tuples: Pool
    bit_ring_pairs: Pool
    seed_commitment: bytes = b""

    def consumed_budget(self) -> Budget:
        return Budget(
            self.ring_triples.consumed,
            self.bit_triples.consumed,
            self.comparison_tuples.consumed,
            self.bit_ring_pairs.consumed,
        )


def dealer_generate(
    budget: Budget, rng_seed: int, cfg: FixedPointConfig = DEFAULT_CONFIG
) -> Tuple[PartyBundle, PartyBundle]:
    """Generate both parties' bundles from a seed.

    Dealer-side self-check: every triple reconstructs to c = a*b before
    delivery. The dealer keeps no copy (nothing retained beyond the
    returned bundles and a commitment to the seed).
    """
    rng = np.random.default_rng(rng_seed)
    mask = np.uint64(cfg.mask)

    n = budget.ring_triples
    a = uniform_ring(rng, n, cfg)
    b = uniform_ring(rng, n, cfg)
    c = (a * b) & mask
    a0, a1 = share(a, rng, cfg)
    b0, b1 = share(b, rng, cfg)
    c0, c1 = share(c, rng, cfg)
    # dealer-side self-check: delivered shares reconstruct to c = a*b
    assert np.array_equal(
        (((a0 + a1) & mask) * ((b0 + b1) & mask)) & mask, (c0 + c1) & mask
    )

    m = budget.bit_triples
    ba = rng.integers(0, 2, m, dtype=np.uint8)
    bb = rng.integers(0, 2, m, dtype=np.uint8)
    bc = ba & bb
    ba0, ba1 = share_bits(ba, rng)
    bb0, bb1 = share_bits(bb, rng)
    bc0, bc1 = share_bits(bc, rng)

    k = budget.comparison_tuples
    r = uniform_ring(rng, k, cfg)
    r0, r1 = share(r, rng, cfg)
    bits = ((r[:, None] >> np.arange(cfg.ring_bits, dtype=np.uint64)[None, :]) & np.uint64(1)).astype(np.uint8)
    rb0, rb1 = share_bits(bits, rng)

    q = budget.bit_ring_pairs
    rbit = rng.integers(0, 2, q, dtype=np.uint8)
    pb0, pb1 = share_bits(rbit, rng)
    pr0, pr1 = share(rbit.astype(np.uint64), rng, cfg)

    commitment = sha256(b"dealer-seed" + struct.pack(">q", rng_seed))

    def bundle(pid, av, bv, cv, bav, bbv, bcv, rv, rbitsv, pbv, prv):
        return PartyBundle(
            party_id=pid,
            cfg=cfg,
            ring_triples=Pool("ring_triple", {"a": av, "b": bv, "c": cv}),
            bit_triples=Pool("bit_triple", {"a": bav, "b": bbv, "c": bcv}),
            comparison_tuples=Pool("comparison", {"r": rv, "r_bits": rbitsv}),
            bit_ring_pairs=Pool("bit_ring", {"bit": pbv, "ring": prv}),
            seed_commitment=commitment,
        )

    return (
        bundle(0, a0, b0, c0, ba0, bb0, bc0, r0, rb0, pb0, pr0),
        bundle(1, a1, b1, c1, ba1, bb1, bc1, r1, rb1, pb1, pr1),
    )


# -- offline bundle file format: JSON header + length-prefixed binary blocks --


def serialize_bundle(bundle: PartyBundle) -> bytes:
    header = {
        "party_id": bundle.party_id,
        "f": bundle.cfg.f,
        "ring_bits": bundle.cfg.ring_bits,
        "counts": {
            "ring_triples": bundle.ring_triples.capacity,
            "bit_triples": bundle.bit_triples.capacity,
            "comparison_tuples": bundle.comparison_tuples.capacity,
            "bit_ring_pairs": bundle.bit_ring_pairs.capacity,
        },
        "seed_commitment": bundle.seed_commitment.hex(),
    }
    blocks = []
    for pool in (bundle.ring_triples, bundle.bit_triples, bundle.comparison_tuples, bundle.bit_ring_pairs):
        for key in sorted(pool.arrays):
            blocks.append(np.ascontiguousarray(pool.arrays[key]).tobytes())
    hdr = json.dumps(header, sort_keys=True).encode()
    out = bytearray(struct.pack(">I", len(hdr)) + hdr)
    for blk in blocks:
        out += struct.pack(">Q", len(blk)) + blk
    return bytes(out)


def deserialize_bundle(data: bytes) -> PartyBundle:
    (hlen,) = struct.unpack_from(">I", data, 0)
    header = json.loads(data[4 : 4 + hlen])
    cfg = FixedPointConfig(f=header["f"], ring_bits=header["ring_bits"])
    off = 4 + hlen

    def next_block():
        nonlocal off
        (blen,) = struct.unpack_from(">Q", data, off)
        off += 8
        blk = data[off : off + blen]
        off += blen
        return blk

    cnt = header["counts"]
    rt_a = np.frombuffer(next_block(), dtype=np.uint64)
    rt_b = np.frombuffer(next_block(), dtype=np.uint64)
    rt_c = np.frombuffer(next_block(), dtype=np.uint64)
    bt_a = np.frombuffer(next_block(), dtype=np.uint8)
    bt_b = np.frombuffer(next_block(), dtype=np.uint8)
    bt_c = np.frombuffer(next_block(), dtype=np.uint8)
    cm_r = np.frombuffer(next_block(), dtype=np.uint64)
    cm_bits = np.frombuffer(next_block(), dtype=np.uint8).reshape(cnt["comparison_tuples"], cfg.ring_bits)
    br_bit = np.frombuffer(next_block(), dtype=np.uint8)
    br_ring = np.frombuffer(next_block(), dtype=np.uint64)
    return PartyBundle(
        party_id=header["party_id"],
        cfg=cfg,
        ring_triples=Pool("ring_triple", {"a": rt_a, "b": rt_b, "c": rt_c}),
        bit_triples=Pool("bit_triple", {"a": bt_a, "b": bt_b, "c": bt_c}),
        comparison_tuples=Pool("comparison", {"r": cm_r, "r_bits": cm_bits}),
        bit_ring_pairs=Pool("bit_ring", {"bit": br_bit, "ring": br_ring}),
        seed_commitment=bytes.fromhex(header["seed_commitment"]),
    )
