"""Full secure-inference sessions: two engines plus the dealer.

Desk-scale topology: the dealer generates correlated randomness offline
(seeing no inputs), the model owner (party 0) shares quantized weights,
the dataset owner (party 1) shares quantized inputs and XOR-shared
one-hot labels, and the online protocol reveals only what the reveal
policy allows.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Tuple

import numpy as np

from ..core import Dataset, FixedPointConfig, DEFAULT_CONFIG, ModelSpec, Weights, encode_array
from ..hashing import sha256
from .channels import DuplexChannel
from .engine import MASKED_REVEAL_KINDS, PartyEngine, Transcript
from .randomness import Budget, ProtocolAbort, budget_for, dealer_generate

REVEAL_POLICIES = ("aggregate_only", "per_sample")


@dataclass(frozen=True)
class MpcSessionConfig:
    cfg: FixedPointConfig = DEFAULT_CONFIG
    reveal_policy: str = "aggregate_only"
    session_seed: int = 0
    dealer_seed: int = 1

    def __post_init__(self):
        if self.reveal_policy not in REVEAL_POLICIES:
            raise ValueError(f"unknown reveal policy {self.reveal_policy!r}")

    def digest(self, spec: ModelSpec, t: int) -> bytes:
        blob = json.dumps(
            {
                "f": self.cfg.f,
                "ring_bits": self.cfg.ring_bits,
                "policy": self.reveal_policy,
                "layer_dims": list(spec.layer_dims),
                "t": t,
            },
            sort_keys=True,
        ).encode()
        return sha256(blob)


def labels_to_onehot_bits(labels: np.ndarray, num_classes: int) -> np.ndarray:
    t = len(labels)
    onehot = np.zeros((t, num_classes), dtype=np.uint8)
    onehot[np.arange(t), labels] = 1
    return onehot


def run_inference_party(
    engine: PartyEngine,
    spec: ModelSpec,
    t: int,
    session: MpcSessionConfig,
    weights: Optional[Weights] = None,
    inputs_ring: Optional[np.ndarray] = None,
    label_bits: Optional[np.ndarray] = None,
) -> Tuple[int, int, Optional[np.ndarray]]:
    """One party's run of the whole pipeline; returns (correct, t, z bits or None)."""
    engine.handshake(session.digest(spec, t))

    dims = spec.layer_dims
    w_sh, b_sh = [], []
    for k in range(spec.num_layers):
        mat = weights.matrices[k] if weights is not None else None
        bias = weights.biases[k] if weights is not None else None
        w_sh.append(engine.share_ring_input(0, mat, (dims[k + 1], dims[k])))
        b_sh.append(engine.share_ring_input(0, bias, (dims[k + 1],)))
    x_sh = engine.share_ring_input(1, inputs_ring, (t, dims[0]))
    lbl_sh = engine.share_bit_input(1, label_bits, (t, spec.num_classes))

    act = x_sh
    for k in range(spec.num_layers):
        act = engine.matmul(w_sh[k], act, b_sh[k])
        if k < spec.num_layers - 1:
            act = engine.relu(act)

    onehot = engine.argmax_onehot(act)
    return engine.accuracy(onehot, lbl_sh)


@dataclass
class MpcRunResult:
    accuracy: Fraction
    per_sample_outcomes: Optional[tuple]
    transcripts: Tuple[Transcript, Transcript]
    budget: Budget
    consumed: Budget
    payload_bytes: Tuple[int, int]  # per party, message bodies only
    wire_bytes: Tuple[int, int]  # per party, tag + seq + bodies
    elapsed_s: float

    @property
    def total_payload_bytes(self) -> int:
        return sum(self.payload_bytes)

    @property
    def total_wire_bytes(self) -> int:
        return sum(self.wire_bytes)


def run_local_mpc(
    spec: ModelSpec,
    weights: Weights,
    ds: Dataset,
    session: MpcSessionConfig = MpcSessionConfig(),
    channels: Optional[tuple] = None,
) -> MpcRunResult:
    """Run a whole secure evaluation with both parties in this process."""
    cfg = session.cfg
    weights.validate(spec)
    t = len(ds)
    if t < 1:
        raise ProtocolAbort("setup", "empty dataset")
    inputs_ring = encode_array(ds.inputs_array(), cfg)
    label_bits = labels_to_onehot_bits(ds.labels_array(), spec.num_classes)

    budget = budget_for(spec, t, cfg, session.reveal_policy)
    bundle0, bundle1 = dealer_generate(budget, session.dealer_seed, cfg)
    if channels is None:
        channels = DuplexChannel.pair()
    ch0, ch1 = channels

    engines = (
        PartyEngine(0, cfg, ch0, bundle0, session.session_seed, session.reveal_policy),
        PartyEngine(1, cfg, ch1, bundle1, session.session_seed, session.reveal_policy),
    )

    results: dict = {}
    errors: dict = {}

    def runner(pid: int):
        try:
            kwargs = (
                {"weights": weights}
                if pid == 0
                else {"inputs_ring": inputs_ring, "label_bits": label_bits}
            )
            results[pid] = run_inference_party(engines[pid], spec, t, session, **kwargs)
        except Exception as e:  # propagate to the caller, fail the whole run
            errors[pid] = e
            for ch in channels:
                if hasattr(ch, "close"):
                    ch.close()

    start = time.perf_counter()
    threads = [threading.Thread(target=runner, args=(pid,)) for pid in (0, 1)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    elapsed = time.perf_counter() - start

    if errors:
        err = errors.get(0) or errors.get(1)
        if isinstance(err, ProtocolAbort):
            raise err
        raise ProtocolAbort("session", str(err)) from err

    correct0, t0, z0 = results[0]
    correct1, t1, z1 = results[1]
    if (correct0, t0) != (correct1, t1):
        raise ProtocolAbort("output", "parties disagree on the revealed result")
    if z0 is not None and not np.array_equal(z0, z1):
        raise ProtocolAbort("output", "parties disagree on per-sample outcomes")

    consumed = engines[0].bundle.consumed_budget()
    return MpcRunResult(
        accuracy=Fraction(correct0, t0),
        per_sample_outcomes=tuple(int(b) for b in z0) if z0 is not None else None,
        transcripts=(engines[0].transcript, engines[1].transcript),
        budget=budget,
        consumed=consumed,
        payload_bytes=(
            engines[0].transcript.sent_payload_bytes(),
            engines[1].transcript.sent_payload_bytes(),
        ),
        wire_bytes=(ch0.bytes_sent, ch1.bytes_sent),
        elapsed_s=elapsed,
    )


# -- analytic communication model (published alongside the budget formula) --


def analytic_payload_bytes(
    spec: ModelSpec,
    t: int,
    cfg: FixedPointConfig = DEFAULT_CONFIG,
    reveal_policy: str = "aggregate_only",
) -> dict:
    """Expected per-party protocol payload bytes (message bodies).

    Openings: a Beaver multiplication opens two ring elements per party,
    a bit AND two bit bytes, a comparison one ring element, a bit-to-ring
    conversion one bit byte; plus input sharing and the config handshake.
    """
    budget = budget_for(spec, t, cfg, reveal_policy)
    dims = spec.layer_dims
    shared_openings = (
        budget.ring_triples * 16
        + budget.bit_triples * 2
        + budget.comparison_tuples * 8
        + budget.bit_ring_pairs * 1
    )
    config = 32
    reveal = 8 if reveal_policy == "aggregate_only" else t
    party0 = shared_openings + config + reveal
    party1 = shared_openings + config + reveal
    # input sharing: party 0 ships weight/bias shares, party 1 input/label shares
    party0 += sum(dims[k + 1] * dims[k] + dims[k + 1] for k in range(len(dims) - 1)) * 8
    party1 += t * dims[0] * 8 + t * dims[-1]
    return {"party0": party0, "party1": party1, "total": party0 + party1}


def classify_reveals(result: MpcRunResult, reveal_policy: str) -> dict:
    """Tag every reveal site and check the policy's allowed set."""
    kinds = set()
    for tr in result.transcripts:
        kinds |= tr.reveal_kinds()
    if reveal_policy == "aggregate_only":
        allowed = MASKED_REVEAL_KINDS | {"final_accuracy"}
    else:
        allowed = MASKED_REVEAL_KINDS | {"per_sample_outcome"}
    return {"kinds": kinds, "allowed": allowed, "ok": kinds <= allowed}
