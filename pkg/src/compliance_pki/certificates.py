"""Certificate model, canonical encoding, issuance and chain validation.

The hierarchy is TrustAnchor -> VendorRoot -> [DeviceType ->] Device.  The
trust anchor only signs trust lists; vendor roots are self-signed and become
trusted by appearing on the CTL (manufacturer-level mode) or by having their
device-type certificates appear there (device-type-level mode).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional, Sequence

from . import crypto
from .canonical import canonical_bytes, parse_canonical, require, require_int, require_str
from .crypto import Digest, KeyPair, PublicKey, Signature
from .errors import IssuanceError, MalformedError

CERT_VERSION = 1
MAX_IDENTIFIER_BYTES = 128

# A self-signed certificate cannot name its own fingerprint (the fingerprint
# covers the issuer field), so the all-zero digest marks self-issuance.
SELF_SIGNED = Digest(crypto.DIGEST_ALGORITHM, bytes(32))


class Role(str, enum.Enum):
    TRUST_ANCHOR = "TrustAnchor"
    VENDOR_ROOT = "VendorRoot"
    DEVICE_TYPE = "DeviceType"
    DEVICE = "Device"


class TrustMode(str, enum.Enum):
    """Which certificates the CTL carries."""

    MANUFACTURER_LEVEL = "ManufacturerLevel"  # one vendor root per manufacturer
    DEVICE_TYPE_LEVEL = "DeviceTypeLevel"  # one certificate per device model

    @classmethod
    def parse(cls, text: str) -> "TrustMode":
        aliases = {"option1": cls.MANUFACTURER_LEVEL, "option2": cls.DEVICE_TYPE_LEVEL}
        key = str(text)
        if key.lower() in aliases:
            return aliases[key.lower()]
        try:
            return cls(key)
        except ValueError:
            raise MalformedError(f"unknown trust mode {text!r}") from None


class Reason(str, enum.Enum):
    OK = "Ok"
    UNTRUSTED_ROOT = "UntrustedRoot"
    REVOKED = "Revoked"
    EXPIRED = "Expired"
    NOT_YET_VALID = "NotYetValid"
    BAD_SIGNATURE = "BadSignature"
    BROKEN_CHAIN = "BrokenChain"
    MALFORMED = "Malformed"
    STALE_TRUST_DATA = "StaleTrustData"


@dataclass(frozen=True)
class ValidationVerdict:
    accepted: bool
    reason: Reason

    def __post_init__(self):
        if self.accepted != (self.reason is Reason.OK):
            raise ValueError("accepted must be true exactly when reason is Ok")

    @classmethod
    def of(cls, reason: Reason) -> "ValidationVerdict":
        return cls(reason is Reason.OK, reason)

    def __str__(self) -> str:
        return self.reason.value


OK = ValidationVerdict.of(Reason.OK)

# issuer role -> subject roles it may certify
_CHILDREN = {
    Role.TRUST_ANCHOR: {Role.VENDOR_ROOT},
    Role.VENDOR_ROOT: {Role.DEVICE_TYPE, Role.DEVICE},
    Role.DEVICE_TYPE: {Role.DEVICE},
    Role.DEVICE: set(),
}

_VALID_SHAPES = (
    (Role.DEVICE, Role.VENDOR_ROOT),
    (Role.DEVICE, Role.DEVICE_TYPE, Role.VENDOR_ROOT),
)


@dataclass(frozen=True)
class SubjectIdentity:
    role: Role
    vendor_id: str = ""
    model_id: str = ""
    device_serial: str = ""

    def check(self) -> None:
        if not isinstance(self.role, Role):
            raise MalformedError(f"unknown role {self.role!r}")
        wanted = {
            "vendor_id": self.role is not Role.TRUST_ANCHOR,
            "model_id": self.role in (Role.DEVICE_TYPE, Role.DEVICE),
            "device_serial": self.role is Role.DEVICE,
        }
        for name, present in wanted.items():
            value = getattr(self, name)
            if not isinstance(value, str):
                raise MalformedError(f"subject.{name} must be a string")
            if bool(value) != present:
                state = "required" if present else "not allowed"
                raise MalformedError(f"subject.{name} is {state} for role {self.role.value}")
            if value:
                _check_identifier(value, name)

    def to_document(self) -> dict:
        doc = {"role": self.role.value}
        for name in ("vendor_id", "model_id", "device_serial"):
            if getattr(self, name):
                doc[name] = getattr(self, name)
        return doc

    @classmethod
    def from_document(cls, doc) -> "SubjectIdentity":
        if not isinstance(doc, dict) or "role" not in doc:
            raise MalformedError("subject: expected an object with a role")
        extra = set(doc) - {"role", "vendor_id", "model_id", "device_serial"}
        if extra:
            raise MalformedError(f"subject: unknown fields {sorted(extra)}")
        try:
            role = Role(doc["role"])
        except ValueError:
            raise MalformedError(f"unknown role {doc['role']!r}") from None
        subject = cls(
            role,
            require_str(doc.get("vendor_id", ""), "subject.vendor_id"),
            require_str(doc.get("model_id", ""), "subject.model_id"),
            require_str(doc.get("device_serial", ""), "subject.device_serial"),
        )
        subject.check()
        # an explicitly empty field would not survive re-serialization
        if any(doc.get(k) == "" for k in doc):
            raise MalformedError("subject: empty identifiers must be omitted")
        return subject

    def label(self) -> str:
        parts = [p for p in (self.vendor_id, self.model_id, self.device_serial) if p]
        return "/".join(parts) or "anchor"


def _check_identifier(value: str, name: str) -> None:
    if len(value.encode("utf-8")) > MAX_IDENTIFIER_BYTES:
        raise MalformedError(f"{name} longer than {MAX_IDENTIFIER_BYTES} bytes")
    if any(ord(c) < 0x20 or 0x7F <= ord(c) <= 0x9F for c in value):
        raise MalformedError(f"{name} contains control characters")


@dataclass(frozen=True)
class Certificate:
    subject: SubjectIdentity
    public_key: PublicKey
    not_before: int
    not_after: int
    issuer_fingerprint: Digest
    signature: Optional[Signature] = None
    version: int = CERT_VERSION

    @cached_property
    def fingerprint(self) -> Digest:
        return crypto.digest(canonical_serialize(self))

    @property
    def role(self) -> Role:
        return self.subject.role

    @property
    def self_signed(self) -> bool:
        return self.issuer_fingerprint == SELF_SIGNED

    def to_document(self, with_signature: bool = True) -> dict:
        doc = {
            "issuer_fingerprint": self.issuer_fingerprint.hex(),
            "not_after": self.not_after,
            "not_before": self.not_before,
            "public_key": self.public_key.encode(),
            "subject": self.subject.to_document(),
            "version": self.version,
        }
        if with_signature:
            doc["signature"] = self.signature.to_document()
        return doc

    @classmethod
    def from_document(cls, doc) -> "Certificate":
        keys = {"issuer_fingerprint", "not_after", "not_before", "public_key", "signature", "subject", "version"}
        require(doc, keys, "certificate")
        cert = cls(
            subject=SubjectIdentity.from_document(doc["subject"]),
            public_key=PublicKey.decode(doc["public_key"]),
            not_before=require_int(doc["not_before"], "not_before"),
            not_after=require_int(doc["not_after"], "not_after"),
            issuer_fingerprint=Digest.from_hex(doc["issuer_fingerprint"]),
            signature=Signature.from_document(doc["signature"]),
            version=require_int(doc["version"], "version"),
        )
        check_certificate(cert)
        return cert


def check_certificate(cert: Certificate, signed: bool = True) -> None:
    """Raise MalformedError unless ``cert`` satisfies the certificate invariants."""
    if not isinstance(cert, Certificate):
        raise MalformedError("not a certificate")
    if cert.version != CERT_VERSION:
        raise MalformedError(f"unsupported certificate version {cert.version!r}")
    if not isinstance(cert.subject, SubjectIdentity):
        raise MalformedError("subject missing")
    cert.subject.check()
    if not isinstance(cert.public_key, PublicKey):
        raise MalformedError("public key missing")
    cert.public_key.check()
    if type(cert.not_before) is not int or type(cert.not_after) is not int:
        raise MalformedError("validity bounds must be integers")
    if not cert.not_before < cert.not_after:
        raise MalformedError("not_before must precede not_after")
    if not isinstance(cert.issuer_fingerprint, Digest) or len(cert.issuer_fingerprint.value) != 32:
        raise MalformedError("issuer fingerprint missing")
    if signed:
        if not isinstance(cert.signature, Signature) or cert.signature.scheme_id != crypto.SCHEME:
            raise MalformedError("certificate is unsigned")


def canonical_serialize(cert: Certificate) -> bytes:
    check_certificate(cert)
    return canonical_bytes(cert.to_document())


def signing_bytes(cert: Certificate) -> bytes:
    """The bytes a certificate's signature covers: the document minus ``signature``."""
    check_certificate(cert, signed=False)
    return canonical_bytes(cert.to_document(with_signature=False))


def deserialize_certificate(data: bytes) -> Certificate:
    return Certificate.from_document(parse_canonical(data))


def _sign_certificate(
    signer: KeyPair, subject: SubjectIdentity, public_key: PublicKey, not_before: int, not_after: int, issuer_fp: Digest
) -> Certificate:
    tbs = Certificate(subject, public_key, not_before, not_after, issuer_fp)
    try:
        check_certificate(tbs, signed=False)
    except MalformedError as exc:
        raise IssuanceError(str(exc)) from None
    sig = crypto.sign(signer.private_key, signing_bytes(tbs))
    return Certificate(subject, public_key, not_before, not_after, issuer_fp, sig)


def self_sign(keypair: KeyPair, subject: SubjectIdentity, not_before: int, not_after: int) -> Certificate:
    """Create a self-signed TrustAnchor or VendorRoot certificate."""
    if subject.role not in (Role.TRUST_ANCHOR, Role.VENDOR_ROOT):
        raise IssuanceError(f"role {subject.role.value} cannot be self-signed")
    return _sign_certificate(keypair, subject, keypair.public_key, not_before, not_after, SELF_SIGNED)


def issue_certificate(
    issuer_keypair: KeyPair,
    issuer_cert: Certificate,
    subject: SubjectIdentity,
    subject_public_key: PublicKey,
    validity: Sequence[int],
) -> Certificate:
    """Issue a certificate for ``subject`` signed by ``issuer_keypair``."""
    not_before, not_after = validity
    if issuer_keypair.public_key != issuer_cert.public_key:
        raise IssuanceError("issuer keypair does not match issuer certificate")
    if subject.role not in _CHILDREN[issuer_cert.role]:
        raise IssuanceError(f"role mismatch: {issuer_cert.role.value} cannot issue {subject.role.value}")
    if issuer_cert.role is not Role.TRUST_ANCHOR and subject.vendor_id != issuer_cert.subject.vendor_id:
        raise IssuanceError("subject vendor differs from issuer vendor")
    if issuer_cert.role is Role.DEVICE_TYPE and subject.model_id != issuer_cert.subject.model_id:
        raise IssuanceError("subject model differs from issuing device type")
    if not (issuer_cert.not_before <= not_before and not_after <= issuer_cert.not_after):
        raise IssuanceError("validity window escapes the issuer's window")
    try:
        subject_public_key.check()
    except MalformedError as exc:
        raise IssuanceError(f"malformed subject key: {exc}") from None
    return _sign_certificate(
        issuer_keypair, subject, subject_public_key, not_before, not_after, issuer_cert.fingerprint
    )


@dataclass(frozen=True)
class CertificateChain:
    """Leaf first: [device, device type (optional), vendor root]."""

    certificates: tuple = field(default_factory=tuple)

    def __init__(self, certificates: Iterable[Certificate] = ()):
        object.__setattr__(self, "certificates", tuple(certificates))

    def __iter__(self):
        return iter(self.certificates)

    def __len__(self) -> int:
        return len(self.certificates)

    def __getitem__(self, i):
        return self.certificates[i]

    @property
    def leaf(self) -> Certificate:
        return self.certificates[0]

    def fingerprints(self) -> list[Digest]:
        return [c.fingerprint for c in self.certificates]

    def to_document(self) -> dict:
        return {"certificates": [c.to_document() for c in self.certificates], "type": "CertificateChain"}

    @classmethod
    def from_document(cls, doc) -> "CertificateChain":
        require(doc, {"certificates", "type"}, "chain")
        if doc["type"] != "CertificateChain" or not isinstance(doc["certificates"], list):
            raise MalformedError("chain: wrong document type")
        return cls(Certificate.from_document(c) for c in doc["certificates"])

    def serialize(self) -> bytes:
        return canonical_bytes(self.to_document())

    @classmethod
    def deserialize(cls, data: bytes) -> "CertificateChain":
        return cls.from_document(parse_canonical(data))


def trust_point(chain: CertificateChain, mode: TrustMode) -> Optional[Certificate]:
    """The chain element the CTL must carry under ``mode``, if the chain has one."""
    if mode is TrustMode.MANUFACTURER_LEVEL:
        return chain[-1]
    for cert in chain:
        if cert.role is Role.DEVICE_TYPE:
            return cert
    return None


def validate_chain(chain: CertificateChain, ctl, crl, now: int, max_trust_age: Optional[int] = None) -> ValidationVerdict:
    """Validate ``chain`` against an already-verified CTL and CRL at time ``now``.

    Checks run in priority order and the first failure is reported:
    structure (Malformed), signatures (BadSignature), issuer linkage
    (BrokenChain), CTL membership (UntrustedRoot), CRL (Revoked), validity
    windows leaf first (NotYetValid/Expired).  When ``max_trust_age`` is
    given, lists issued longer ago than that yield StaleTrustData.
    """
    if not isinstance(chain, CertificateChain) or len(chain) not in (2, 3):
        return ValidationVerdict.of(Reason.MALFORMED)
    try:
        for cert in chain:
            check_certificate(cert)
    except MalformedError:
        return ValidationVerdict.of(Reason.MALFORMED)
    if tuple(c.role for c in chain) not in _VALID_SHAPES:
        return ValidationVerdict.of(Reason.MALFORMED)

    certs = chain.certificates
    for i, cert in enumerate(certs):
        issuer_key = certs[i + 1].public_key if i + 1 < len(certs) else cert.public_key
        if not crypto.verify(issuer_key, signing_bytes(cert), cert.signature):
            return ValidationVerdict.of(Reason.BAD_SIGNATURE)

    for child, parent in zip(certs, certs[1:]):
        if child.issuer_fingerprint != parent.fingerprint:
            return ValidationVerdict.of(Reason.BROKEN_CHAIN)
        if child.subject.vendor_id != parent.subject.vendor_id:
            return ValidationVerdict.of(Reason.BROKEN_CHAIN)
        if parent.role is Role.DEVICE_TYPE and child.subject.model_id != parent.subject.model_id:
            return ValidationVerdict.of(Reason.BROKEN_CHAIN)
    if not certs[-1].self_signed:
        return ValidationVerdict.of(Reason.BROKEN_CHAIN)

    anchor_point = trust_point(chain, ctl.mode)
    if anchor_point is None or anchor_point.fingerprint not in ctl.fingerprints():
        return ValidationVerdict.of(Reason.UNTRUSTED_ROOT)

    revoked = crl.fingerprints()
    if any(c.fingerprint in revoked for c in certs):
        return ValidationVerdict.of(Reason.REVOKED)

    for cert in certs:
        if now < cert.not_before:
            return ValidationVerdict.of(Reason.NOT_YET_VALID)
        if now > cert.not_after:
            return ValidationVerdict.of(Reason.EXPIRED)

    if max_trust_age is not None and now - min(ctl.issued_at, crl.issued_at) > max_trust_age:
        return ValidationVerdict.of(Reason.STALE_TRUST_DATA)
    return OK
