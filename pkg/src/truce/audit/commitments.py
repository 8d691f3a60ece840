"""Salted per-point commitments and their Merkle aggregation.

Each data point commits as H(0x02 || salt || canonical_encode(point)) with
an independent 32-byte salt; the ordered digests aggregate into a Merkle
root (leaf = H(0x00 || C_i), node = H(0x01 || left || right), odd last
node promoted unchanged).
"""

from __future__ import annotations

import hashlib
import secrets
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from ..core import Dataset, DataPoint, FixedPointConfig, DEFAULT_CONFIG, canonical_encode
from ..hashing import DIGEST_SIZE, hash_commitment, hash_leaf, hash_node


class CommitmentError(ValueError):
    pass


class BindingViolation(CommitmentError):
    """An opening failed to verify; names the failing index."""

    def __init__(self, index: int, reason: str):
        self.index = index
        self.reason = reason
        super().__init__(f"opening for index {index} rejected: {reason}")


SALT_LEN = 32


@dataclass(frozen=True)
class Commitment:
    digest: bytes

    def __post_init__(self):
        if len(self.digest) != DIGEST_SIZE:
            raise CommitmentError("bad digest length")


@dataclass(frozen=True)
class CommitmentSet:
    digests: tuple  # ordered per-point commitment digests

    def __len__(self):
        return len(self.digests)


@dataclass(frozen=True)
class MerkleRoot:
    root: bytes
    t: int

    def to_json(self) -> dict:
        from ..hashing import HASH_ALG

        return {"root": self.root.hex(), "t": self.t, "hash_alg": HASH_ALG}

    @staticmethod
    def from_json(obj: dict) -> "MerkleRoot":
        return MerkleRoot(bytes.fromhex(obj["root"]), int(obj["t"]))


@dataclass(frozen=True)
class MerkleProof:
    index: int
    siblings: tuple  # digests from leaf level upward; promotion levels skipped

    def to_json(self) -> dict:
        return {"index": self.index, "proof": [s.hex() for s in self.siblings]}


def commit_point(point: DataPoint, salt: bytes, cfg: FixedPointConfig = DEFAULT_CONFIG) -> Commitment:
    if len(salt) != SALT_LEN:
        raise CommitmentError(f"salt must be {SALT_LEN} bytes")
    return Commitment(hash_commitment(salt, canonical_encode(point, cfg)))


def derive_salts(t: int, seed: Optional[bytes]) -> List[bytes]:
    """Independent 32-byte salts; fresh CSPRNG salts unless a seed is given.

    Seeded derivation (for reproducible CLI commits from a keyfile) uses a
    SHA-256 counter construction over the seed.
    """
    if seed is None:
        return [secrets.token_bytes(SALT_LEN) for _ in range(t)]
    return [
        hashlib.sha256(b"truce-salt" + seed + i.to_bytes(8, "big")).digest() for i in range(t)
    ]


def merkle_levels(leaf_hashes: Sequence[bytes]) -> List[List[bytes]]:
    if not leaf_hashes:
        raise CommitmentError("empty tree")
    levels = [list(leaf_hashes)]
    while len(levels[-1]) > 1:
        cur = levels[-1]
        nxt = []
        for i in range(0, len(cur) - 1, 2):
            nxt.append(hash_node(cur[i], cur[i + 1]))
        if len(cur) % 2 == 1:
            nxt.append(cur[-1])  # odd last node promoted unchanged
        levels.append(nxt)
    return levels


def merkle_root(commitments: CommitmentSet) -> MerkleRoot:
    leaves = [hash_leaf(c) for c in commitments.digests]
    return MerkleRoot(merkle_levels(leaves)[-1][0], len(leaves))


def merkle_prove(commitments: CommitmentSet, index: int) -> MerkleProof:
    if not (0 <= index < len(commitments)):
        raise CommitmentError("index out of range")
    leaves = [hash_leaf(c) for c in commitments.digests]
    levels = merkle_levels(leaves)
    siblings = []
    idx = index
    for level in levels[:-1]:
        sib = idx ^ 1
        if sib < len(level):
            siblings.append(level[sib])
        # else: promoted node, no sibling at this level
        idx //= 2
    return MerkleProof(index, tuple(siblings))


def merkle_verify(root: MerkleRoot, commitment: Commitment, proof: MerkleProof) -> bool:
    if not (0 <= proof.index < root.t):
        return False
    h = hash_leaf(commitment.digest)
    idx = proof.index
    width = root.t
    pos = 0
    while width > 1:
        sib = idx ^ 1
        if sib < width:
            if pos >= len(proof.siblings):
                return False
            if idx % 2 == 0:
                h = hash_node(h, proof.siblings[pos])
            else:
                h = hash_node(proof.siblings[pos], h)
            pos += 1
        idx //= 2
        width = (width + 1) // 2
    return pos == len(proof.siblings) and h == root.root


def commit_dataset(
    ds: Dataset,
    rng_seed: Optional[bytes] = None,
    cfg: FixedPointConfig = DEFAULT_CONFIG,
) -> Tuple[CommitmentSet, MerkleRoot, List[bytes]]:
    """Commit every point under a fresh salt and aggregate into one root."""
    if len(ds) < 1:
        raise CommitmentError("cannot commit an empty dataset")
    salts = derive_salts(len(ds), rng_seed)
    cset = CommitmentSet(tuple(commit_point(p, s, cfg).digest for p, s in zip(ds.points, salts)))
    return cset, merkle_root(cset), salts


def open_and_verify(
    root: MerkleRoot,
    openings: Sequence[Tuple[int, bytes, DataPoint, MerkleProof]],
    cfg: FixedPointConfig = DEFAULT_CONFIG,
) -> List[DataPoint]:
    """Verify a batch of openings against the root; all-or-nothing.

    Each opening is (index, salt, point, proof). Any failure raises
    BindingViolation naming the failing index.
    """
    verified = []
    for index, salt, point, proof in openings:
        if proof.index != index:
            raise BindingViolation(index, "proof index mismatch")
        try:
            c = commit_point(point, salt, cfg)
        except (CommitmentError, ValueError) as e:
            raise BindingViolation(index, f"malformed opening: {e}") from e
        if not merkle_verify(root, c, proof):
            raise BindingViolation(index, "Merkle proof failed")
        verified.append(point)
    return verified


def verify_committed_dataset(
    root: MerkleRoot,
    ds: Dataset,
    salts: Sequence[bytes],
    cfg: FixedPointConfig = DEFAULT_CONFIG,
) -> bool:
    """Recommit every point and compare roots; True iff identical."""
    if len(salts) != len(ds):
        return False
    try:
        cset = CommitmentSet(
            tuple(commit_point(p, s, cfg).digest for p, s in zip(ds.points, salts))
        )
    except CommitmentError:
        return False
    return merkle_root(cset) == root
