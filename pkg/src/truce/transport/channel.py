"""Mutually authenticated encrypted channels over stream sockets.

Handshake: both sides send hello = {certificate, ephemeral X25519 public
key, 16-byte nonce}, then sign the handshake transcript with the ed25519
key their certificate binds them to. The X25519 shared secret is expanded
with HKDF-SHA256 into one ChaCha20-Poly1305 key per direction; frames use
a counter nonce, a 4-byte big-endian length prefix, and a 16 MiB cap.
"""

from __future__ import annotations

import json
import os
import socket
import struct
import threading
from dataclasses import dataclass, field
from typing import Optional

from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ed25519, x25519
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from ..hashing import sha256
from .ca import CertError, EphemeralCert, verify_cert

MAX_FRAME = 16 * 1024 * 1024  # payload bytes per frame
AEAD_TAG_LEN = 16
LENGTH_PREFIX = 4
HANDSHAKE_INFO = b"truce-channel-v1"


class FrameError(ValueError):
    pass


class HandshakeError(ValueError):
    pass


class ChannelIntegrityError(ValueError):
    pass


def _send_exact(sock: socket.socket, data: bytes) -> None:
    sock.sendall(data)


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    while n > 0:
        got = sock.recv(min(n, 65536))
        if not got:
            raise FrameError("connection closed mid-frame")
        chunks.append(got)
        n -= len(got)
    return b"".join(chunks)


def send_raw_frame(sock: socket.socket, payload: bytes, max_len: int = MAX_FRAME) -> int:
    """Length-prefixed frame; returns bytes put on the wire."""
    if len(payload) > max_len:
        raise FrameError(f"frame of {len(payload)} bytes exceeds the {max_len} byte cap")
    _send_exact(sock, struct.pack(">I", len(payload)) + payload)
    return LENGTH_PREFIX + len(payload)


def recv_raw_frame(sock: socket.socket, max_len: int = MAX_FRAME) -> bytes:
    (length,) = struct.unpack(">I", _recv_exact(sock, LENGTH_PREFIX))
    if length > max_len:
        raise FrameError(f"frame of {length} bytes exceeds the {max_len} byte cap")
    return _recv_exact(sock, length)


class CertUseRegistry:
    """Tracks certificate use so each certificate opens one channel per endpoint."""

    def __init__(self):
        self._used: set = set()
        self._lock = threading.Lock()

    def mark(self, serial: int, endpoint: str) -> None:
        with self._lock:
            if (serial, endpoint) in self._used:
                raise HandshakeError(
                    f"certificate serial {serial} already used at endpoint {endpoint}"
                )
            self._used.add((serial, endpoint))


@dataclass
class SecureChannel:
    """Encrypted, authenticated, counter-sequenced frame channel."""

    sock: socket.socket
    send_key: bytes
    recv_key: bytes
    peer_cert: EphemeralCert
    local_cert: EphemeralCert
    _send_aead: ChaCha20Poly1305 = field(init=False)
    _recv_aead: ChaCha20Poly1305 = field(init=False)
    _send_ctr: int = 0
    _recv_ctr: int = 0
    bytes_sent: int = 0
    bytes_received: int = 0
    _closed: bool = False

    def __post_init__(self):
        self._send_aead = ChaCha20Poly1305(self.send_key)
        self._recv_aead = ChaCha20Poly1305(self.recv_key)

    def _nonce(self, ctr: int) -> bytes:
        return ctr.to_bytes(12, "big")

    def send_frame(self, payload: bytes) -> None:
        if self._closed:
            raise FrameError("channel closed")
        if len(payload) > MAX_FRAME:
            raise FrameError(f"frame of {len(payload)} bytes exceeds the {MAX_FRAME} byte cap")
        ct = self._send_aead.encrypt(self._nonce(self._send_ctr), payload, None)
        self._send_ctr += 1
        self.bytes_sent += send_raw_frame(self.sock, ct, MAX_FRAME + AEAD_TAG_LEN)

    def recv_frame(self) -> bytes:
        if self._closed:
            raise FrameError("channel closed")
        ct = recv_raw_frame(self.sock, MAX_FRAME + AEAD_TAG_LEN)
        self.bytes_received += LENGTH_PREFIX + len(ct)
        try:
            pt = self._recv_aead.decrypt(self._nonce(self._recv_ctr), ct, None)
        except Exception as e:
            self.close()
            raise ChannelIntegrityError("frame failed authentication; channel closed") from e
        self._recv_ctr += 1
        return pt

    def close(self) -> None:
        self._closed = True
        try:
            self.sock.close()
        except OSError:
            pass


def _hello(cert: EphemeralCert, eph_pub: x25519.X25519PublicKey, nonce: bytes) -> bytes:
    return json.dumps(
        {
            "cert": cert.der.hex(),
            "eph": eph_pub.public_bytes(
                serialization.Encoding.Raw, serialization.PublicFormat.Raw
            ).hex(),
            "nonce": nonce.hex(),
        },
        sort_keys=True,
    ).encode()


def _derive_keys(shared: bytes, transcript: bytes) -> bytes:
    return HKDF(
        algorithm=hashes.SHA256(), length=64, salt=transcript, info=HANDSHAKE_INFO
    ).derive(shared)


def secure_handshake(
    sock: socket.socket,
    cert: EphemeralCert,
    identity_key: ed25519.Ed25519PrivateKey,
    root_public_key: ed25519.Ed25519PublicKey,
    initiator: bool,
    expected_role: Optional[str] = None,
    expected_request_id: Optional[str] = None,
    use_registry: Optional[CertUseRegistry] = None,
    endpoint: str = "peer",
) -> SecureChannel:
    """Mutual authentication plus key agreement over an open stream socket."""
    own_pub = identity_key.public_key().public_bytes(
        serialization.Encoding.Raw, serialization.PublicFormat.Raw
    )
    if own_pub != cert.public_key_bytes:
        raise HandshakeError("identity key does not match the presented certificate")

    eph_priv = x25519.X25519PrivateKey.generate()
    nonce = os.urandom(16)
    my_hello = _hello(cert, eph_priv.public_key(), nonce)

    if initiator:
        send_raw_frame(sock, my_hello)
        peer_hello = recv_raw_frame(sock)
    else:
        peer_hello = recv_raw_frame(sock)
        send_raw_frame(sock, my_hello)

    try:
        peer = json.loads(peer_hello)
        peer_cert_der = bytes.fromhex(peer["cert"])
        peer_eph = bytes.fromhex(peer["eph"])
        bytes.fromhex(peer["nonce"])
    except (ValueError, KeyError, TypeError) as e:
        raise HandshakeError(f"malformed hello: {e}") from e

    peer_cert = verify_cert(
        peer_cert_der,
        root_public_key,
        expected_role=expected_role,
        expected_request_id=expected_request_id,
    )
    if expected_request_id is None and peer_cert.request_id != cert.request_id:
        raise HandshakeError(
            f"peer certificate bound to request {peer_cert.request_id}, "
            f"ours to {cert.request_id}"
        )
    if use_registry is not None:
        use_registry.mark(peer_cert.serial, endpoint)

    # transcript binds both hellos in wire order
    hello_i, hello_r = (my_hello, peer_hello) if initiator else (peer_hello, my_hello)
    transcript = sha256(hello_i + hello_r)

    sig = identity_key.sign(transcript)
    if initiator:
        send_raw_frame(sock, sig)
        peer_sig = recv_raw_frame(sock)
    else:
        peer_sig = recv_raw_frame(sock)
        send_raw_frame(sock, sig)

    try:
        ed25519.Ed25519PublicKey.from_public_bytes(peer_cert.public_key_bytes).verify(
            peer_sig, transcript
        )
    except Exception as e:
        raise HandshakeError("peer transcript signature invalid") from e

    shared = eph_priv.exchange(x25519.X25519PublicKey.from_public_bytes(peer_eph))
    keys = _derive_keys(shared, transcript)
    k_i2r, k_r2i = keys[:32], keys[32:]
    send_key, recv_key = (k_i2r, k_r2i) if initiator else (k_r2i, k_i2r)
    return SecureChannel(
        sock=sock, send_key=send_key, recv_key=recv_key, peer_cert=peer_cert, local_cert=cert
    )


def tcp_listen(host: str = "127.0.0.1", port: int = 0) -> socket.socket:
    srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    srv.bind((host, port))
    srv.listen(8)
    return srv


def tcp_connect(host: str, port: int, timeout: float = 10.0) -> socket.socket:
    sock = socket.create_connection((host, port), timeout=timeout)
    sock.settimeout(timeout)
    return sock
