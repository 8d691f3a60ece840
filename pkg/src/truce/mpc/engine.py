"""Semi-honest two-party online protocol engine.

Both parties run the same code over a lockstep message channel. Every
value that ever crosses the wire is either a uniformly masked opening
(Beaver d/e values, comparison masks c = x + r, bit masks b ^ r) or the
final agreed output; the transcript records a classifier tag for each
reveal so this can be checked mechanically.

Wire format per message: step tag (1 byte) + sequence number (8 bytes,
big-endian) + body; ring elements travel as little-endian 8-byte words,
bits as single bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from ..core import FixedPointConfig
from .channels import Channel, ChannelClosed
from .randomness import PartyBundle, ProtocolAbort
from .sharing import uniform_ring

TAG_CONFIG = 0x01
TAG_INPUT = 0x02
TAG_BEAVER = 0x10
TAG_COMPARE = 0x11
TAG_BIT_AND = 0x12
TAG_BIT_MASK = 0x13
TAG_Z = 0x20
TAG_ACCURACY = 0x21

TAG_NAMES = {
    TAG_CONFIG: "config",
    TAG_INPUT: "input_share",
    TAG_BEAVER: "beaver_open",
    TAG_COMPARE: "compare_open",
    TAG_BIT_AND: "bit_and_open",
    TAG_BIT_MASK: "bit_mask_open",
    TAG_Z: "z_open",
    TAG_ACCURACY: "accuracy_open",
}

# classifier: which reveal sites carry uniformly masked values
MASKED_REVEAL_KINDS = {"masked_beaver", "masked_comparison", "masked_bit"}
REVEAL_KIND = {
    TAG_BEAVER: "masked_beaver",
    TAG_BIT_AND: "masked_beaver",
    TAG_COMPARE: "masked_comparison",
    TAG_BIT_MASK: "masked_bit",
    TAG_Z: "per_sample_outcome",
    TAG_ACCURACY: "final_accuracy",
}


@dataclass
class Transcript:
    """Ordered log of every message and every reveal site of one party."""

    messages: List[tuple] = field(default_factory=list)  # (dir, tag, seq, body)
    reveals: List[dict] = field(default_factory=list)

    def record_message(self, direction: str, tag: int, seq: int, body: bytes) -> None:
        self.messages.append((direction, tag, seq, body))

    def record_reveal(self, tag: int, count: int) -> None:
        self.reveals.append({"kind": REVEAL_KIND[tag], "tag": TAG_NAMES[tag], "count": count})

    def reveal_kinds(self) -> set:
        return {r["kind"] for r in self.reveals}

    def message_bytes(self) -> bytes:
        return b"".join(
            bytes([t]) + struct.pack(">Q", s) + b for d, t, s, b in self.messages if d == "sent"
        )

    def sent_payload_bytes(self) -> int:
        return sum(len(b) for d, _, _, b in self.messages if d == "sent")

    def observed_bytes(self) -> bytes:
        """Everything this party saw on the wire (received bodies)."""
        return b"".join(b for d, _, _, b in self.messages if d == "recv")


def _ring_bytes(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype=np.uint64).astype("<u8").tobytes()


def _ring_from(body: bytes) -> np.ndarray:
    return np.frombuffer(body, dtype="<u8").astype(np.uint64)


class PartyEngine:
    """One party's view of an MPC session."""

    def __init__(
        self,
        party_id: int,
        cfg: FixedPointConfig,
        channel: Channel,
        bundle: PartyBundle,
        mask_seed: int = 0,
        reveal_policy: str = "aggregate_only",
    ):
        if party_id not in (0, 1):
            raise ValueError("party_id must be 0 or 1")
        self.party_id = party_id
        self.cfg = cfg
        self.mask = np.uint64(cfg.mask)
        self.channel = channel
        self.bundle = bundle
        self.reveal_policy = reveal_policy
        self.transcript = Transcript()
        self.seq_out = 0
        self.seq_in = 0
        self._mask_rng = np.random.default_rng([mask_seed, party_id])

    # -- messaging ---------------------------------------------------------

    def _send(self, tag: int, body: bytes) -> None:
        msg = bytes([tag]) + struct.pack(">Q", self.seq_out) + body
        self.channel.send_frame(msg)
        self.transcript.record_message("sent", tag, self.seq_out, body)
        self.seq_out += 1

    def _recv(self, tag: int) -> bytes:
        try:
            msg = self.channel.recv_frame()
        except ChannelClosed as e:
            raise ProtocolAbort(TAG_NAMES.get(tag, hex(tag)), f"channel closed: {e}") from e
        got_tag = msg[0]
        (seq,) = struct.unpack_from(">Q", msg, 1)
        body = msg[9:]
        if got_tag != tag or seq != self.seq_in:
            raise ProtocolAbort(
                TAG_NAMES.get(tag, hex(tag)),
                f"desync: expected tag {tag:#x} seq {self.seq_in}, got {got_tag:#x} seq {seq}",
            )
        self.seq_in += 1
        self.transcript.record_message("recv", tag, seq, body)
        return body

    def exchange(self, tag: int, body: bytes) -> bytes:
        # fixed order avoids simultaneous large writes deadlocking a socket
        if self.party_id == 0:
            self._send(tag, body)
            return self._recv(tag)
        got = self._recv(tag)
        self._send(tag, body)
        return got

    # -- openings ----------------------------------------------------------

    def open_ring(self, x_sh: np.ndarray, tag: int) -> np.ndarray:
        flat = np.asarray(x_sh, dtype=np.uint64).ravel()
        peer = _ring_from(self.exchange(tag, _ring_bytes(flat)))
        self.transcript.record_reveal(tag, flat.size)
        return ((flat + peer) & self.mask).reshape(np.shape(x_sh))

    def open_bits(self, b_sh: np.ndarray, tag: int) -> np.ndarray:
        flat = np.asarray(b_sh, dtype=np.uint8).ravel()
        peer = np.frombuffer(self.exchange(tag, flat.tobytes()), dtype=np.uint8)
        self.transcript.record_reveal(tag, flat.size)
        return (flat ^ peer).reshape(np.shape(b_sh))

    # -- arithmetic primitives ----------------------------------------------

    def beaver_mul(self, x_sh: np.ndarray, y_sh: np.ndarray, triple: Optional[dict] = None) -> np.ndarray:
        """Share of x*y using one Beaver triple per element (batched opening)."""
        x = np.asarray(x_sh, dtype=np.uint64).ravel()
        y = np.asarray(y_sh, dtype=np.uint64).ravel()
        if x.shape != y.shape:
            raise ProtocolAbort("beaver", "operand shape mismatch")
        tr = triple if triple is not None else self.bundle.ring_triples.take(x.size)
        d_sh = (x - tr["a"]) & self.mask
        e_sh = (y - tr["b"]) & self.mask
        body = _ring_bytes(d_sh) + _ring_bytes(e_sh)
        peer = _ring_from(self.exchange(TAG_BEAVER, body))
        d = (d_sh + peer[: x.size]) & self.mask
        e = (e_sh + peer[x.size :]) & self.mask
        self.transcript.record_reveal(TAG_BEAVER, 2 * x.size)
        z = (tr["c"] + d * tr["b"] + e * tr["a"]) & self.mask
        if self.party_id == 0:
            z = (z + d * e) & self.mask
        return z.reshape(np.shape(x_sh))

    def bit_and(self, x_sh: np.ndarray, y_sh: np.ndarray) -> np.ndarray:
        """XOR-share of x AND y via a boolean Beaver triple per gate."""
        x = np.asarray(x_sh, dtype=np.uint8).ravel()
        y = np.asarray(y_sh, dtype=np.uint8).ravel()
        if x.shape != y.shape:
            raise ProtocolAbort("bit_and", "operand shape mismatch")
        tr = self.bundle.bit_triples.take(x.size)
        d_sh = x ^ tr["a"]
        e_sh = y ^ tr["b"]
        peer = np.frombuffer(self.exchange(TAG_BIT_AND, d_sh.tobytes() + e_sh.tobytes()), dtype=np.uint8)
        d = d_sh ^ peer[: x.size]
        e = e_sh ^ peer[x.size :]
        self.transcript.record_reveal(TAG_BIT_AND, 2 * x.size)
        z = tr["c"] ^ (d & tr["b"]) ^ (e & tr["a"])
        if self.party_id == 0:
            z ^= d & e
        return z.reshape(np.shape(x_sh))

    def truncate(self, x_sh: np.ndarray) -> np.ndarray:
        """Local probabilistic truncation by f bits (share shifting)."""
        f = np.uint64(self.cfg.f)
        x = np.asarray(x_sh, dtype=np.uint64) & self.mask
        if self.party_id == 0:
            return (x >> f) & self.mask
        neg = (np.uint64(0) - x) & self.mask
        return (np.uint64(0) - ((neg >> f) & self.mask)) & self.mask

    # -- comparison ----------------------------------------------------------

    def msb(self, x_sh: np.ndarray) -> np.ndarray:
        """XOR-share of the most significant bit of x.

        Opens c = x + r for a dealer-supplied uniform r, then evaluates the
        borrow chain of c - r over the XOR-shared bits of r with one AND
        gate per bit position.
        """
        n = self.cfg.ring_bits
        x = np.asarray(x_sh, dtype=np.uint64).ravel()
        tup = self.bundle.comparison_tuples.take(x.size)
        c = self.open_ring((x + tup["r"]) & self.mask, TAG_COMPARE)
        r_bits = tup["r_bits"]  # (m, n) XOR shares
        c_bits = ((c[:, None] >> np.arange(n, dtype=np.uint64)[None, :]) & np.uint64(1)).astype(np.uint8)
        borrow = np.zeros(x.size, dtype=np.uint8)
        for i in range(n - 1):
            ci = c_bits[:, i]
            # t_i = (NOT c_i) AND r_i : public bit times a shared bit, local
            t_i = r_bits[:, i] & (ci ^ 1)
            # u_i = 1 XOR c_i XOR r_i : public constant folded in by party 0
            u_i = r_bits[:, i].copy()
            if self.party_id == 0:
                u_i ^= ci ^ 1
            borrow = t_i ^ self.bit_and(borrow, u_i)
        msb_sh = r_bits[:, n - 1] ^ borrow
        if self.party_id == 0:
            msb_sh = msb_sh ^ c_bits[:, n - 1]
        return msb_sh.reshape(np.shape(x_sh))

    def b2a(self, b_sh: np.ndarray) -> np.ndarray:
        """Convert XOR bit shares to ring shares using dealer bit-ring pairs."""
        b = np.asarray(b_sh, dtype=np.uint8).ravel()
        pair = self.bundle.bit_ring_pairs.take(b.size)
        m = self.open_bits(b ^ pair["bit"], TAG_BIT_MASK)
        # b = m XOR rb = m + rb - 2*m*rb with m public
        term = np.where(m == 1, (np.uint64(0) - pair["ring"]) & self.mask, pair["ring"])
        out = term
        if self.party_id == 0:
            out = (out + m.astype(np.uint64)) & self.mask
        return (out & self.mask).reshape(np.shape(b_sh))

    def drelu(self, x_sh: np.ndarray) -> np.ndarray:
        """Bit share of (x >= 0); drelu(0) = 1 by convention."""
        m = self.msb(x_sh)
        return m ^ 1 if self.party_id == 0 else m

    def relu(self, x_sh: np.ndarray) -> np.ndarray:
        g = self.b2a(self.drelu(x_sh))
        return self.beaver_mul(g, x_sh)

    # -- layers ----------------------------------------------------------------

    def matmul(self, w_sh: np.ndarray, x_sh: np.ndarray, bias_sh: np.ndarray) -> np.ndarray:
        """Share of x W^T + b for a batch, truncated back to scale f.

        x_sh: (t, d_in), w_sh: (d_out, d_in), bias_sh: (d_out,) at scale f.
        One batched opening per layer.
        """
        t = x_sh.shape[0]
        d_out, d_in = w_sh.shape
        if x_sh.shape[1] != d_in or bias_sh.shape != (d_out,):
            raise ProtocolAbort("matmul", "shape mismatch")
        xb = np.broadcast_to(x_sh[:, None, :], (t, d_out, d_in))
        wb = np.broadcast_to(w_sh[None, :, :], (t, d_out, d_in))
        prod = self.beaver_mul(xb, wb)
        s = prod.sum(axis=2, dtype=np.uint64) & self.mask
        s = (s + (bias_sh.astype(np.uint64) << np.uint64(self.cfg.f))) & self.mask
        return self.truncate(s)

    def argmax_onehot(self, logits_sh: np.ndarray) -> np.ndarray:
        """One-hot bit shares of the per-row argmax, ties toward lower index.

        Tournament of d-1 comparisons; winners' values and one-hot flags are
        multiplexed level by level with batched openings.
        """
        t, d = logits_sh.shape
        init_flag = np.ones(t, dtype=np.uint8) if self.party_id == 0 else np.zeros(t, dtype=np.uint8)
        groups = [(logits_sh[:, j].copy(), [(j, init_flag.copy())]) for j in range(d)]
        while len(groups) > 1:
            pairs = [(groups[i], groups[i + 1]) for i in range(0, len(groups) - 1, 2)]
            leftover = [groups[-1]] if len(groups) % 2 == 1 else []
            # g = 1 iff right value strictly greater (msb of left - right)
            diff = np.concatenate([(l[0] - r[0]) & self.mask for l, r in pairs])
            g = self.msb(diff).reshape(len(pairs), t)
            gr = self.b2a(g.ravel()).reshape(len(pairs), t)
            delta = np.concatenate([(r[0] - l[0]) & self.mask for l, r in pairs]).reshape(len(pairs), t)
            upd = self.beaver_mul(gr, delta)
            # batched flag muxing: left flags AND (NOT g), right flags AND g
            xs, ys, layout = [], [], []
            for p, (l, r) in enumerate(pairs):
                notg = g[p] ^ 1 if self.party_id == 0 else g[p]
                for j, flag in l[1]:
                    xs.append(flag)
                    ys.append(notg)
                    layout.append((p, j))
                for j, flag in r[1]:
                    xs.append(flag)
                    ys.append(g[p])
                    layout.append((p, j))
            anded = self.bit_and(np.concatenate(xs), np.concatenate(ys)).reshape(len(layout), t)
            merged = {p: [] for p in range(len(pairs))}
            for row, (p, j) in enumerate(layout):
                merged[p].append((j, anded[row]))
            groups = [
                (((pairs[p][0][0] + upd[p]) & self.mask), merged[p]) for p in range(len(pairs))
            ] + leftover
        onehot = np.zeros((t, d), dtype=np.uint8)
        for j, flag in groups[0][1]:
            onehot[:, j] = flag
        return onehot

    def accuracy(self, pred_onehot_sh: np.ndarray, label_onehot_sh: np.ndarray):
        """Match bits z_i and the final reveal, honoring the reveal policy.

        Returns (numerator, t, z_bits_or_None): numerator is the revealed
        count of correct predictions.
        """
        t, d = pred_onehot_sh.shape
        prods = self.bit_and(pred_onehot_sh, label_onehot_sh)
        z_sh = np.bitwise_xor.reduce(prods, axis=1)
        if self.reveal_policy == "per_sample":
            z = self.open_bits(z_sh, TAG_Z)
            return int(z.sum()), t, z
        z_ring = self.b2a(z_sh)
        total_sh = np.array([z_ring.sum(dtype=np.uint64) & self.mask], dtype=np.uint64)
        total = self.open_ring(total_sh, TAG_ACCURACY)
        return int(total[0]), t, None

    # -- input distribution -----------------------------------------------------

    def share_ring_input(self, holder: int, value: Optional[np.ndarray], shape) -> np.ndarray:
        """Additively share a ring array held by `holder` with the peer."""
        if self.party_id == holder:
            v = np.asarray(value, dtype=np.uint64) & self.mask
            if v.shape != tuple(shape):
                raise ProtocolAbort("input", "input shape mismatch")
            peer_sh = uniform_ring(self._mask_rng, v.shape, self.cfg)
            self._send(TAG_INPUT, _ring_bytes(peer_sh))
            return (v - peer_sh) & self.mask
        return _ring_from(self._recv(TAG_INPUT)).reshape(shape)

    def share_bit_input(self, holder: int, value: Optional[np.ndarray], shape) -> np.ndarray:
        if self.party_id == holder:
            v = np.asarray(value, dtype=np.uint8)
            if v.shape != tuple(shape):
                raise ProtocolAbort("input", "input shape mismatch")
            peer_sh = self._mask_rng.integers(0, 2, v.shape, dtype=np.uint8)
            self._send(TAG_INPUT, peer_sh.tobytes())
            return v ^ peer_sh
        return np.frombuffer(self._recv(TAG_INPUT), dtype=np.uint8).reshape(shape).copy()

    def handshake(self, config_digest: bytes) -> None:
        peer = self.exchange(TAG_CONFIG, config_digest)
        if peer != config_digest:
            raise ProtocolAbort("handshake", "session configuration mismatch")
