"""Data-flow transcripts and the per-mode visibility policy scanner.

Every executor records which principal shipped which artifact to whom.
A policy table says, per trust mode, what each principal is allowed to
observe; the scanner flags any event outside the policy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple

PRINCIPALS = ("model_owner", "dataset_owner", "executor", "enclave", "dealer", "platform")

# artifact kinds a flow event can carry
ARTIFACTS = (
    "model",  # plaintext weights / architecture
    "dataset",  # plaintext benchmark points
    "prediction",  # a per-sample predicted class
    "record",  # the final EvaluationRecord
    "attestation",  # attestation report / nonce exchange
    "encrypted_payload",  # ciphertext only; carries no plaintext to the holder
    "shares",  # secret shares / masked protocol openings
    "commitment",  # Merkle roots, salts, opening proofs
)


@dataclass(frozen=True)
class FlowEvent:
    sender: str
    receiver: str
    artifact: str
    nbytes: int = 0

    def __post_init__(self):
        if self.sender not in PRINCIPALS or self.receiver not in PRINCIPALS:
            raise ValueError(f"unknown principal in {self.sender}->{self.receiver}")
        if self.artifact not in ARTIFACTS:
            raise ValueError(f"unknown artifact {self.artifact!r}")


@dataclass
class FlowTranscript:
    mode: str
    events: list = field(default_factory=list)

    def record(self, sender: str, receiver: str, artifact: str, nbytes: int = 0) -> None:
        self.events.append(FlowEvent(sender, receiver, artifact, nbytes))

    def visible_to(self, principal: str) -> set:
        return {e.artifact for e in self.events if e.receiver == principal}

    def bytes_between(self, sender: str, receiver: str) -> int:
        return sum(e.nbytes for e in self.events if e.sender == sender and e.receiver == receiver)

    def total_bytes(self) -> int:
        return sum(e.nbytes for e in self.events)


# Per-mode policy: what each principal may observe beyond its own artifacts.
# Everyone may receive the final record and ciphertext.
_COMMON = {"record", "encrypted_payload", "attestation", "commitment"}
FLOW_POLICY = {
    "model_api": {
        "model_owner": _COMMON | {"dataset"},  # inherent to the API topology; flagged
        "dataset_owner": _COMMON | {"prediction"},
        "platform": _COMMON,
    },
    "dataset_owner": {
        "model_owner": _COMMON,
        "dataset_owner": _COMMON | {"model"},
        "platform": _COMMON,
    },
    "ttp": {
        "model_owner": _COMMON,
        "dataset_owner": _COMMON,
        "executor": _COMMON | {"model", "dataset"},
        "platform": _COMMON,
    },
    "tee": {
        "model_owner": _COMMON,
        "dataset_owner": _COMMON,
        "enclave": _COMMON | {"model", "dataset"},
        "platform": _COMMON,
    },
    "mpc": {
        "model_owner": _COMMON | {"shares"},
        "dataset_owner": _COMMON | {"shares"},
        "dealer": _COMMON,
        "platform": _COMMON,
    },
}


def scan_flows(transcript: FlowTranscript) -> dict:
    """Check every event against the mode's visibility policy."""
    policy = FLOW_POLICY[transcript.mode]
    violations: Tuple = tuple(
        e
        for e in transcript.events
        if e.artifact not in policy.get(e.receiver, set())
    )
    return {"ok": not violations, "violations": violations, "mode": transcript.mode}
