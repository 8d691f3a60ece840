"""Sampling audits of private benchmarks.

Two variants:
  HonestOwner  - auditor samples kappa indices, owner reveals those points,
                 auditor applies the per-point test T to each.
  Committed    - owner first publishes a Merkle root over salted per-point
                 commitments; revealed points must verify against it.
Accepted only if every sampled point verifies (Committed) and tests to 1.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, List, Optional, Protocol, Sequence, Tuple

from ..core import DataPoint, DomainError
from .bounds import confidence_bound
from .commitments import BindingViolation, MerkleProof, MerkleRoot, open_and_verify


def sample_indices(t: int, kappa: int, rng: random.Random) -> List[int]:
    """kappa distinct indices drawn uniformly without replacement from {0..t-1}."""
    if not (1 <= kappa <= t):
        raise DomainError(f"need 1 <= kappa <= t, got kappa={kappa} t={t}")
    return sorted(rng.sample(range(t), kappa))


class AuditTest(Protocol):
    test_id: str

    def evaluate(self, point: DataPoint) -> int: ...

    def reset(self) -> None: ...


@dataclass
class SchemaTest:
    """Point matches the declared schema: feature count and label range."""

    num_features: int
    num_classes: int
    test_id: str = "schema"

    def evaluate(self, point: DataPoint) -> int:
        return int(len(point.input) == self.num_features and 0 <= point.label < self.num_classes)

    def reset(self) -> None:
        pass


@dataclass
class NonDegenerateTest:
    """Input is not the all-zero vector."""

    test_id: str = "non_degenerate"

    def evaluate(self, point: DataPoint) -> int:
        return int(any(v != 0.0 for v in point.input))

    def reset(self) -> None:
        pass


@dataclass
class NoDuplicateTest:
    """No exact duplicate of a previously sampled point within this audit."""

    test_id: str = "no_duplicate"
    _seen: set = field(default_factory=set)

    def evaluate(self, point: DataPoint) -> int:
        key = (point.input, point.label)
        if key in self._seen:
            return 0
        self._seen.add(key)
        return 1

    def reset(self) -> None:
        self._seen.clear()


@dataclass
class CompositeTest:
    """All sub-tests must pass."""

    tests: tuple
    test_id: str = "composite"

    def evaluate(self, point: DataPoint) -> int:
        return int(all(t.evaluate(point) == 1 for t in self.tests))

    def reset(self) -> None:
        for t in self.tests:
            t.reset()


def default_test(num_features: int, num_classes: int) -> CompositeTest:
    return CompositeTest((SchemaTest(num_features, num_classes), NonDegenerateTest(), NoDuplicateTest()))


class AuditVariant(str, Enum):
    HONEST_OWNER = "HonestOwner"
    COMMITTED = "Committed"


class AuditState(str, Enum):
    INITIALIZED = "Initialized"
    INDICES_SENT = "IndicesSent"
    POINTS_RECEIVED = "PointsReceived"
    VERIFIED = "Verified"
    ACCEPTED = "Accepted"
    REJECTED = "Rejected"


_TRANSITIONS = {
    AuditState.INITIALIZED: {AuditState.INDICES_SENT, AuditState.REJECTED},
    AuditState.INDICES_SENT: {AuditState.POINTS_RECEIVED, AuditState.REJECTED},
    AuditState.POINTS_RECEIVED: {AuditState.VERIFIED, AuditState.REJECTED},
    AuditState.VERIFIED: {AuditState.ACCEPTED, AuditState.REJECTED},
    AuditState.ACCEPTED: set(),
    AuditState.REJECTED: set(),
}


class AuditOwner(Protocol):
    """Benchmark-owner endpoint driven by run_audit."""

    def dataset_size(self) -> int: ...

    def published_root(self) -> Optional[MerkleRoot]: ...

    def provide_points(self, indices: Sequence[int]) -> List[DataPoint]: ...

    def provide_openings(
        self, indices: Sequence[int]
    ) -> List[Tuple[int, bytes, DataPoint, MerkleProof]]: ...


class LocalOwner:
    """In-process owner backed by a dataset (and salts, if committed)."""

    def __init__(self, dataset, salts=None, commitments=None, root=None):
        self.dataset = dataset
        self.salts = salts
        self.commitments = commitments
        self.root = root

    def dataset_size(self) -> int:
        return len(self.dataset)

    def published_root(self):
        return self.root

    def provide_points(self, indices):
        return [self.dataset.points[i] for i in indices]

    def provide_openings(self, indices):
        from .commitments import merkle_prove

        return [
            (i, self.salts[i], self.dataset.points[i], merkle_prove(self.commitments, i))
            for i in indices
        ]


@dataclass
class AuditSession:
    session_id: str
    variant: AuditVariant
    kappa: int
    alpha: float
    seed: Optional[int] = None
    state: AuditState = AuditState.INITIALIZED
    indices: Optional[List[int]] = None
    verdict: Optional[str] = None
    rejection_reason: Optional[str] = None
    per_index_results: dict = field(default_factory=dict)
    transcript: List[dict] = field(default_factory=list)
    log_transcript: bool = True

    @property
    def bound(self) -> float:
        return confidence_bound(self.alpha, self.kappa)

    def _advance(self, new_state: AuditState) -> None:
        if new_state not in _TRANSITIONS[self.state]:
            raise DomainError(f"illegal audit transition {self.state} -> {new_state}")
        self.state = new_state

    def log(self, event: str, **payload) -> None:
        if self.log_transcript:
            self.transcript.append({"ts": time.time(), "event": event, **payload})

    def _reject(self, reason: str) -> None:
        self.rejection_reason = reason
        self.verdict = "Rejected"
        self._advance(AuditState.REJECTED)
        self.log("rejected", reason=reason)

    def to_json(self) -> dict:
        return {
            "session_id": self.session_id,
            "variant": self.variant.value,
            "kappa": self.kappa,
            "alpha": self.alpha,
            "bound": self.bound,
            "state": self.state.value,
            "indices": self.indices,
            "verdict": self.verdict,
            "rejection_reason": self.rejection_reason,
            "per_index_results": {str(k): v for k, v in self.per_index_results.items()},
        }

    def transcript_jsonl(self) -> str:
        return "".join(json.dumps(e) + "\n" for e in self.transcript)


def evaluate_sample(points: Iterable[DataPoint], test: AuditTest) -> Tuple[bool, dict]:
    """Apply T to each sampled point; all-pass decision plus per-point bits."""
    test.reset()
    results = {}
    all_pass = True
    for i, p in enumerate(points):
        bit = test.evaluate(p)
        results[i] = bit
        if bit != 1:
            all_pass = False
    return all_pass, results


def run_audit(session: AuditSession, owner: AuditOwner, test: AuditTest) -> AuditSession:
    """Drive one audit session to Accepted or Rejected against an owner endpoint."""
    rng = random.Random(session.seed)
    t = owner.dataset_size()

    root = None
    if session.variant == AuditVariant.COMMITTED:
        root = owner.published_root()
        if root is None:
            session._reject("owner has not published a commitment root")
            return session
        session.log("root_received", root=root.root.hex(), t=root.t)

    try:
        session.indices = sample_indices(t, session.kappa, rng)
    except DomainError as e:
        session._reject(f"sampling failed: {e}")
        return session
    session._advance(AuditState.INDICES_SENT)
    session.log("indices_sent", indices=session.indices)

    try:
        if session.variant == AuditVariant.COMMITTED:
            openings = owner.provide_openings(session.indices)
        else:
            points = owner.provide_points(session.indices)
            if len(points) != len(session.indices):
                raise ValueError("owner returned wrong number of points")
    except TimeoutError:
        session._reject("owner timeout")
        return session
    except Exception as e:  # malformed response from the owner
        session._reject(f"malformed owner response: {e}")
        return session
    session._advance(AuditState.POINTS_RECEIVED)

    if session.variant == AuditVariant.COMMITTED:
        by_index = {o[0]: o for o in openings}
        if set(by_index) != set(session.indices) or len(openings) != len(session.indices):
            session._reject("openings do not match requested indices")
            return session
        openings = [by_index[idx] for idx in session.indices]
        try:
            points = open_and_verify(root, openings)
        except BindingViolation as e:
            session._reject(f"binding violation at index {e.index}: {e.reason}")
            return session
        session.log("openings_verified", count=len(points))
    session._advance(AuditState.VERIFIED)

    all_pass, results = evaluate_sample(points, test)
    session.per_index_results = {idx: results[i] for i, idx in enumerate(session.indices)}
    session.log("tests_evaluated", results=session.per_index_results)

    if all_pass:
        session.verdict = "Accepted"
        session._advance(AuditState.ACCEPTED)
        session.log("accepted", bound=session.bound)
    else:
        failing = [idx for idx, bit in session.per_index_results.items() if bit != 1]
        session._reject(f"test failed at indices {failing}")
    return session
