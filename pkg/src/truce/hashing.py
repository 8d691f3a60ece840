"""One fixed collision-resistant hash for the whole platform.

SHA-256 with single-byte domain separation prefixes:
    0x00 Merkle leaf, 0x01 Merkle internal node, 0x02 salted commitment.
"""

from __future__ import annotations

import hashlib

DIGEST_SIZE = 32
HASH_ALG = "sha256"

LEAF_PREFIX = b"\x00"
NODE_PREFIX = b"\x01"
COMMIT_PREFIX = b"\x02"


def hash_leaf(commitment: bytes) -> bytes:
    return hashlib.sha256(LEAF_PREFIX + commitment).digest()


def hash_node(left: bytes, right: bytes) -> bytes:
    return hashlib.sha256(NODE_PREFIX + left + right).digest()


def hash_commitment(salt: bytes, preimage: bytes) -> bytes:
    return hashlib.sha256(COMMIT_PREFIX + salt + preimage).digest()


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()
