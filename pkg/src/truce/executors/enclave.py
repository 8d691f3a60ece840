"""Simulated confidential-execution topology.

The enclave is a separate job-scoped execution context with a synthetic
attestation root. Each owner picks a fresh nonce, requests an attestation
report, checks the measurement / nonce / signature, and only then encrypts
its payload to the enclave's public key (ephemeral X25519 agreement plus
ChaCha20-Poly1305). The enclave decrypts, optionally verifies the dataset
against its registered commitment root, evaluates, and emits only the
record.
"""

from __future__ import annotations

import io
import json
import os
import time
from fractions import Fraction
from typing import Callable, Optional

from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ed25519, x25519
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from ..audit import MerkleRoot, verify_committed_dataset
from ..core import (
    Dataset,
    DEFAULT_CONFIG,
    EvaluationRecord,
    FixedPointConfig,
    MetricsRecord,
    dataset_payload_bytes,
    model_from_json,
    model_payload_bytes,
    read_dataset_jsonl,
)
from ..hashing import sha256
from .errors import ExecutorError, RefusalError
from .flow import FlowTranscript
from .plaintext import _evaluate_clear, _record
from .sources import InlineWeights

ENCLAVE_BUILD_ID = "truce-enclave-v1"
ENCLAVE_HKDF_INFO = b"truce-enclave-payload"
NONCE_LEN = 16


def compute_measurement(build_id: str, cfg: FixedPointConfig) -> bytes:
    """Digest identifying the exact code/config running inside the enclave."""
    blob = json.dumps({"f": cfg.f, "ring_bits": cfg.ring_bits}, sort_keys=True).encode()
    return sha256(build_id.encode() + blob)


class AttestationRoot:
    """Synthetic root of trust that signs attestation reports."""

    def __init__(self):
        self._key = ed25519.Ed25519PrivateKey.generate()

    @property
    def public_key(self) -> ed25519.Ed25519PublicKey:
        return self._key.public_key()

    def sign(self, report_bytes: bytes) -> bytes:
        return self._key.sign(report_bytes)


def _report_bytes(report: dict) -> bytes:
    return json.dumps(report, sort_keys=True).encode()


def encrypt_to_enclave(enclave_pub_raw: bytes, plaintext: bytes) -> bytes:
    """Hybrid encryption: ephemeral X25519 + HKDF + ChaCha20-Poly1305."""
    eph = x25519.X25519PrivateKey.generate()
    shared = eph.exchange(x25519.X25519PublicKey.from_public_bytes(enclave_pub_raw))
    key = HKDF(algorithm=hashes.SHA256(), length=32, salt=None, info=ENCLAVE_HKDF_INFO).derive(
        shared
    )
    nonce = os.urandom(12)
    ct = ChaCha20Poly1305(key).encrypt(nonce, plaintext, None)
    return (
        eph.public_key().public_bytes(serialization.Encoding.Raw, serialization.PublicFormat.Raw)
        + nonce
        + ct
    )


def _decrypt_in_enclave(priv: x25519.X25519PrivateKey, blob: bytes) -> bytes:
    if len(blob) < 44:
        raise ValueError("ciphertext too short")
    eph_pub, nonce, ct = blob[:32], blob[32:44], blob[44:]
    shared = priv.exchange(x25519.X25519PublicKey.from_public_bytes(eph_pub))
    key = HKDF(algorithm=hashes.SHA256(), length=32, salt=None, info=ENCLAVE_HKDF_INFO).derive(
        shared
    )
    return ChaCha20Poly1305(key).decrypt(nonce, ct, None)


class Enclave:
    """Job-scoped simulated enclave speaking a three-message protocol.

    attest(nonce) -> signed report; payload(role, blob) -> ok;
    result() -> record JSON. Payloads are deleted after the result.
    """

    def __init__(
        self,
        request_id: str,
        attestation_root: AttestationRoot,
        cfg: FixedPointConfig = DEFAULT_CONFIG,
        expected_root: Optional[MerkleRoot] = None,
        build_id: str = ENCLAVE_BUILD_ID,
    ):
        self.request_id = request_id
        self.cfg = cfg
        self.expected_root = expected_root
        self.build_id = build_id
        self._attestation_root = attestation_root
        self._key = x25519.X25519PrivateKey.generate()
        self._payloads: dict = {}

    @property
    def measurement(self) -> bytes:
        return compute_measurement(self.build_id, self.cfg)

    def handle(self, msg: dict) -> dict:
        try:
            kind = msg["type"]
            if kind == "attest":
                return self._attest(bytes.fromhex(msg["nonce"]))
            if kind == "payload":
                return self._payload(msg["role"], bytes.fromhex(msg["blob"]))
            if kind == "result":
                return self._result()
        except (KeyError, ValueError) as e:
            return {"type": "error", "message": f"malformed message: {e}"}
        return {"type": "error", "message": f"unknown message type {msg.get('type')!r}"}

    def _attest(self, nonce: bytes) -> dict:
        if len(nonce) != NONCE_LEN:
            return {"type": "error", "message": "nonce must be 16 bytes"}
        report = {
            "measurement": self.measurement.hex(),
            "nonce": nonce.hex(),
            "enclave_pub": self._key.public_key()
            .public_bytes(serialization.Encoding.Raw, serialization.PublicFormat.Raw)
            .hex(),
        }
        sig = self._attestation_root.sign(_report_bytes(report))
        return {"type": "report", "report": report, "sig": sig.hex()}

    def _payload(self, role: str, blob: bytes) -> dict:
        if role not in ("model", "dataset"):
            return {"type": "error", "message": f"unknown payload role {role!r}"}
        try:
            self._payloads[role] = _decrypt_in_enclave(self._key, blob)
        except Exception:
            self._payloads.clear()
            return {"type": "error", "message": "payload decryption failed; aborting"}
        return {"type": "ok"}

    def _result(self) -> dict:
        if "model" not in self._payloads or "dataset" not in self._payloads:
            return {"type": "error", "message": "missing payloads"}
        try:
            spec, w, _ = model_from_json(json.loads(self._payloads["model"]))
            ds_obj = json.loads(self._payloads["dataset"])
            ds = read_dataset_jsonl(io.StringIO(ds_obj["dataset_jsonl"]), self.cfg)
            salts = (
                tuple(bytes.fromhex(s) for s in ds_obj["salts"])
                if ds_obj.get("salts")
                else None
            )
        except (ValueError, KeyError) as e:
            return {"type": "error", "message": f"malformed payload: {e}"}
        if self.expected_root is not None:
            if salts is None or not verify_committed_dataset(
                self.expected_root, ds, salts, self.cfg
            ):
                self._payloads.clear()
                return {
                    "type": "error",
                    "message": "dataset does not match its registered commitment root",
                }
        start = time.perf_counter()
        acc, z = _evaluate_clear(InlineWeights(spec, w, self.cfg), ds)
        elapsed = time.perf_counter() - start
        # communication = the two artifact payloads; envelope and encryption
        # overhead is framing, not evaluation traffic
        comm = len(self._payloads["model"]) + len(ds_obj["dataset_jsonl"].encode())
        rec = _record(self.request_id, "tee", acc, z, len(ds), comm, elapsed, {})
        self._payloads.clear()
        return {"type": "record", "record": rec.to_json()}


def verify_attestation(
    reply: dict,
    root_public_key: ed25519.Ed25519PublicKey,
    expected_measurement: bytes,
    expected_nonce: bytes,
) -> bytes:
    """Validate a report; returns the enclave public key; refuses otherwise."""
    if reply.get("type") != "report":
        raise RefusalError(f"expected an attestation report, got {reply.get('type')!r}")
    report = reply["report"]
    try:
        root_public_key.verify(bytes.fromhex(reply["sig"]), _report_bytes(report))
    except Exception as e:
        raise RefusalError("attestation signature invalid") from e
    if bytes.fromhex(report["measurement"]) != expected_measurement:
        raise RefusalError("measurement mismatch: enclave is not running the expected build")
    if bytes.fromhex(report["nonce"]) != expected_nonce:
        raise RefusalError("stale attestation nonce: possible replay")
    return bytes.fromhex(report["enclave_pub"])


def run_tee(
    request_id: str,
    model: InlineWeights,
    ds: Dataset,
    channel: Callable[[dict], dict],
    attestation_root_pub: ed25519.Ed25519PublicKey,
    expected_measurement: bytes,
    salts: Optional[tuple] = None,
    flow: Optional[FlowTranscript] = None,
) -> EvaluationRecord:
    """Attest, encrypt both payloads to the enclave, collect the record."""
    if len(ds) < 1:
        raise ExecutorError("empty dataset")
    model_bytes = model_payload_bytes(model.spec, model.weights, model.cfg)
    ds_blob = json.dumps(
        {
            "dataset_jsonl": dataset_payload_bytes(ds).decode(),
            "salts": [s.hex() for s in salts] if salts else None,
        }
    ).encode()

    # each owner independently attests with a fresh nonce before sending
    payloads = (("model_owner", "model", model_bytes), ("dataset_owner", "dataset", ds_blob))
    for owner, role, payload in payloads:
        nonce = os.urandom(NONCE_LEN)
        reply = channel({"type": "attest", "nonce": nonce.hex()})
        if flow is not None:
            flow.record("enclave", owner, "attestation", len(json.dumps(reply)))
        enclave_pub = verify_attestation(
            reply, attestation_root_pub, expected_measurement, nonce
        )
        blob = encrypt_to_enclave(enclave_pub, payload)
        ack = channel({"type": "payload", "role": role, "blob": blob.hex()})
        if flow is not None:
            flow.record(owner, "enclave", "encrypted_payload", len(blob))
            flow.record(owner, "enclave", role, len(payload))
        if ack.get("type") != "ok":
            raise ExecutorError(f"enclave refused the {role} payload: {ack.get('message')}")

    reply = channel({"type": "result"})
    if reply.get("type") != "record":
        raise RefusalError(f"enclave refused to evaluate: {reply.get('message')}")
    obj = reply["record"]
    rec = EvaluationRecord(
        request_id=obj["request_id"],
        trust_mode=obj["trust_mode"],
        accuracy=Fraction(obj["accuracy"]["numerator"], obj["accuracy"]["denominator"]),
        metrics=MetricsRecord(**obj["metrics"]),
        per_sample_outcomes=tuple(obj["per_sample_outcomes"])
        if obj.get("per_sample_outcomes") is not None
        else None,
        flags=obj.get("flags", {}),
    )
    if flow is not None:
        blob = len(json.dumps(obj))
        flow.record("enclave", "platform", "record", blob)
        flow.record("enclave", "model_owner", "record", blob)
        flow.record("enclave", "dataset_owner", "record", blob)
    return rec


def serve_enclave(sock, enclave: Enclave) -> None:
    """Serve one job's messages over raw length-prefixed frames."""
    from ..transport.channel import FrameError, recv_raw_frame, send_raw_frame

    while True:
        try:
            msg = json.loads(recv_raw_frame(sock))
        except (FrameError, ValueError):
            return
        reply = enclave.handle(msg)
        send_raw_frame(sock, json.dumps(reply).encode())
        if reply.get("type") in ("record",):
            return


def socket_channel(sock) -> Callable[[dict], dict]:
    from ..transport.channel import recv_raw_frame, send_raw_frame

    def channel(msg: dict) -> dict:
        send_raw_frame(sock, json.dumps(msg).encode())
        return json.loads(recv_raw_frame(sock))

    return channel
