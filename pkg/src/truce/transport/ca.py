"""Platform certificate authority and per-submission ephemeral certificates.

Each evaluation submission gets one certificate per protocol role, signed
by the platform CA and valid for that submission only. The role and the
request id travel in a platform extension of an X.509 certificate.
"""

from __future__ import annotations

import datetime
import json
import threading
from dataclasses import dataclass
from typing import Callable, Optional

from cryptography import x509
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric import ed25519
from cryptography.x509.oid import NameOID

ROLES = ("ModelOwner", "DatasetOwner", "Executor", "Dealer", "Auditor", "Platform")

# platform extension carrying {"role", "request_id"} as JSON
TRUCE_EXTENSION_OID = x509.ObjectIdentifier("1.3.6.1.4.1.54321.1.1")

CA_COMMON_NAME = "truce-platform-ca"


class CertError(ValueError):
    pass


@dataclass(frozen=True)
class EphemeralCert:
    """A parsed, platform-issued per-submission certificate."""

    der: bytes
    role: str
    request_id: str
    serial: int
    not_before: datetime.datetime
    not_after: datetime.datetime
    public_key_bytes: bytes  # raw ed25519

    @staticmethod
    def from_der(der: bytes) -> "EphemeralCert":
        cert = x509.load_der_x509_certificate(der)
        try:
            ext = cert.extensions.get_extension_for_oid(TRUCE_EXTENSION_OID)
            info = json.loads(ext.value.public_bytes())
        except (x509.ExtensionNotFound, ValueError) as e:
            raise CertError(f"missing platform extension: {e}") from e
        pub = cert.public_key()
        if not isinstance(pub, ed25519.Ed25519PublicKey):
            raise CertError("certificate key is not ed25519")
        return EphemeralCert(
            der=der,
            role=info["role"],
            request_id=info["request_id"],
            serial=cert.serial_number,
            not_before=cert.not_valid_before_utc,
            not_after=cert.not_valid_after_utc,
            public_key_bytes=pub.public_bytes(
                serialization.Encoding.Raw, serialization.PublicFormat.Raw
            ),
        )

    def hex(self) -> str:
        return self.der.hex()


def generate_identity_key() -> ed25519.Ed25519PrivateKey:
    return ed25519.Ed25519PrivateKey.generate()


def save_private_key(key: ed25519.Ed25519PrivateKey, path: str) -> None:
    pem = key.private_bytes(
        serialization.Encoding.PEM,
        serialization.PrivateFormat.PKCS8,
        serialization.NoEncryption(),
    )
    with open(path, "wb") as fh:
        fh.write(pem)


def load_private_key(path: str) -> ed25519.Ed25519PrivateKey:
    with open(path, "rb") as fh:
        key = serialization.load_pem_private_key(fh.read(), password=None)
    if not isinstance(key, ed25519.Ed25519PrivateKey):
        raise CertError("key file does not hold an ed25519 private key")
    return key


class PlatformCA:
    """Root signing authority with an append-only issuance journal."""

    def __init__(
        self,
        journal_path: Optional[str] = None,
        now: Optional[Callable] = None,
        key: Optional[ed25519.Ed25519PrivateKey] = None,
    ):
        self._key = key or ed25519.Ed25519PrivateKey.generate()
        self._serial = 0
        self._lock = threading.Lock()
        self._revoked: set = set()
        self._known_requests: set = set()
        self._issued_roles: set = set()  # (request_id, role)
        self.journal: list = []
        self._journal_path = journal_path
        self._now = now or (lambda: datetime.datetime.now(datetime.timezone.utc))

    @property
    def root_public_key(self) -> ed25519.Ed25519PublicKey:
        return self._key.public_key()

    def root_public_bytes(self) -> bytes:
        return self.root_public_key.public_bytes(
            serialization.Encoding.Raw, serialization.PublicFormat.Raw
        )

    def register_request(self, request_id: str) -> None:
        """Mark a request as approved so certificates may be issued for it."""
        with self._lock:
            self._known_requests.add(request_id)

    def issue_cert(
        self,
        role: str,
        request_id: str,
        pubkey: ed25519.Ed25519PublicKey,
        ttl_seconds: int = 3600,
    ) -> EphemeralCert:
        if role not in ROLES:
            raise CertError(f"unknown role {role!r}")
        with self._lock:
            if request_id not in self._known_requests:
                raise CertError(f"unknown or unapproved request {request_id!r}")
            if (request_id, role) in self._issued_roles:
                raise CertError(f"role {role} already issued for request {request_id}")
            self._serial += 1
            serial = self._serial
            self._issued_roles.add((request_id, role))
        now = self._now()
        info = json.dumps({"role": role, "request_id": request_id}).encode()
        builder = (
            x509.CertificateBuilder()
            .subject_name(x509.Name([x509.NameAttribute(NameOID.COMMON_NAME, f"truce-{role}")]))
            .issuer_name(x509.Name([x509.NameAttribute(NameOID.COMMON_NAME, CA_COMMON_NAME)]))
            .public_key(pubkey)
            .serial_number(serial)
            .not_valid_before(now - datetime.timedelta(seconds=5))
            .not_valid_after(now + datetime.timedelta(seconds=ttl_seconds))
            .add_extension(x509.UnrecognizedExtension(TRUCE_EXTENSION_OID, info), critical=False)
        )
        cert = builder.sign(self._key, algorithm=None)
        der = cert.public_bytes(serialization.Encoding.DER)
        entry = {
            "serial": serial,
            "role": role,
            "request_id": request_id,
            "issued_at": now.isoformat(),
            "not_after": (now + datetime.timedelta(seconds=ttl_seconds)).isoformat(),
        }
        with self._lock:
            self.journal.append(entry)
            if self._journal_path:
                with open(self._journal_path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(entry) + "\n")
        return EphemeralCert.from_der(der)

    def revoke(self, serial: int) -> None:
        with self._lock:
            self._revoked.add(serial)

    def is_revoked(self, serial: int) -> bool:
        with self._lock:
            return serial in self._revoked


def verify_cert(
    der: bytes,
    root_public_key: ed25519.Ed25519PublicKey,
    expected_role: Optional[str] = None,
    expected_request_id: Optional[str] = None,
    revocation_check: Optional[Callable[[int], bool]] = None,
    now: Optional[datetime.datetime] = None,
) -> EphemeralCert:
    """Validate chain-to-root, validity window, role, and request binding."""
    cert = x509.load_der_x509_certificate(der)
    try:
        root_public_key.verify(cert.signature, cert.tbs_certificate_bytes)
    except Exception as e:
        raise CertError("certificate does not chain to the platform root") from e
    parsed = EphemeralCert.from_der(der)
    now = now or datetime.datetime.now(datetime.timezone.utc)
    if not (parsed.not_before <= now <= parsed.not_after):
        raise CertError("certificate outside its validity window")
    if expected_role is not None and parsed.role != expected_role:
        raise CertError(f"expected role {expected_role}, certificate says {parsed.role}")
    if expected_request_id is not None and parsed.request_id != expected_request_id:
        raise CertError(
            f"certificate bound to request {parsed.request_id}, expected {expected_request_id}"
        )
    if revocation_check is not None and revocation_check(parsed.serial):
        raise CertError("certificate revoked")
    return parsed
