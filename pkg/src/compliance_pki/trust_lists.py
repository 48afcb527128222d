"""Anchor-signed Certificate Trust Lists and Certificate Revocation Lists.

Both lists are sequence numbered.  A device only replaces a list with a
validly signed one carrying a strictly greater sequence number, and the CTL
and CRL are updated independently of each other.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Iterable, Optional, Union

from . import crypto
from .canonical import canonical_bytes, parse_canonical, require, require_int
from .certificates import Certificate, Role, SubjectIdentity, TrustMode, check_certificate, signing_bytes
from .crypto import Digest, KeyPair, PublicKey, Signature
from .errors import MalformedError

CTL_TYPE = "CertificateTrustList"
CRL_TYPE = "CertificateRevocationList"

_MODE_ROLE = {
    TrustMode.MANUFACTURER_LEVEL: Role.VENDOR_ROOT,
    TrustMode.DEVICE_TYPE_LEVEL: Role.DEVICE_TYPE,
}


@dataclass(frozen=True)
class TrustEntry:
    fingerprint: Digest
    subject: SubjectIdentity
    public_key: PublicKey

    @classmethod
    def from_certificate(cls, cert: Certificate) -> "TrustEntry":
        return cls(cert.fingerprint, cert.subject, cert.public_key)

    def to_document(self) -> dict:
        return {
            "fingerprint": self.fingerprint.hex(),
            "public_key": self.public_key.encode(),
            "subject": self.subject.to_document(),
        }

    @classmethod
    def from_document(cls, doc) -> "TrustEntry":
        require(doc, {"fingerprint", "public_key", "subject"}, "CTL entry")
        return cls(
            Digest.from_hex(doc["fingerprint"]),
            SubjectIdentity.from_document(doc["subject"]),
            PublicKey.decode(doc["public_key"]),
        )


@dataclass(frozen=True)
class RevocationEntry:
    fingerprint: Digest
    revoked_at: int
    reason_code: int = 1

    def to_document(self) -> dict:
        return {"fingerprint": self.fingerprint.hex(), "reason_code": self.reason_code, "revoked_at": self.revoked_at}

    @classmethod
    def from_document(cls, doc) -> "RevocationEntry":
        require(doc, {"fingerprint", "reason_code", "revoked_at"}, "CRL entry")
        return cls(
            Digest.from_hex(doc["fingerprint"]),
            require_int(doc["revoked_at"], "revoked_at"),
            require_int(doc["reason_code"], "reason_code", 0),
        )


def _sorted(entries: Iterable) -> tuple:
    return tuple(sorted(entries, key=lambda e: e.fingerprint.value))


@dataclass(frozen=True)
class CertificateTrustList:
    sequence: int
    mode: TrustMode
    entries: tuple = ()
    issued_at: int = 0
    anchor_signature: Optional[Signature] = None

    def __post_init__(self):
        object.__setattr__(self, "entries", _sorted(self.entries))

    @cached_property
    def _fingerprints(self) -> frozenset:
        return frozenset(e.fingerprint for e in self.entries)

    def fingerprints(self) -> frozenset:
        return self._fingerprints

    def check(self) -> None:
        require_int(self.sequence, "sequence", 0)
        require_int(self.issued_at, "issued_at")
        if not isinstance(self.mode, TrustMode):
            raise MalformedError("CTL mode missing")
        if len(self._fingerprints) != len(self.entries):
            raise MalformedError("duplicate CTL entry")
        want = _MODE_ROLE[self.mode]
        for entry in self.entries:
            entry.subject.check()
            entry.public_key.check()
            if entry.subject.role is not want:
                raise MalformedError(f"{self.mode.value} CTL may only hold {want.value} entries")

    def to_document(self, with_signature: bool = True) -> dict:
        doc = {
            "entries": [e.to_document() for e in self.entries],
            "issued_at": self.issued_at,
            "mode": self.mode.value,
            "sequence": self.sequence,
            "type": CTL_TYPE,
        }
        if with_signature:
            if self.anchor_signature is None:
                raise MalformedError("CTL is unsigned")
            doc["anchor_signature"] = self.anchor_signature.to_document()
        return doc

    @classmethod
    def from_document(cls, doc) -> "CertificateTrustList":
        require(doc, {"anchor_signature", "entries", "issued_at", "mode", "sequence", "type"}, "CTL")
        if doc["type"] != CTL_TYPE or not isinstance(doc["entries"], list):
            raise MalformedError("not a CTL document")
        ctl = cls(
            sequence=require_int(doc["sequence"], "sequence", 0),
            mode=_parse_mode(doc["mode"]),
            entries=tuple(TrustEntry.from_document(e) for e in doc["entries"]),
            issued_at=require_int(doc["issued_at"], "issued_at"),
            anchor_signature=Signature.from_document(doc["anchor_signature"]),
        )
        ctl.check()
        return ctl


def _parse_mode(value) -> TrustMode:
    try:
        return TrustMode(value)
    except ValueError:
        raise MalformedError(f"unknown trust mode {value!r}") from None


@dataclass(frozen=True)
class CertificateRevocationList:
    sequence: int
    revoked: tuple = ()
    issued_at: int = 0
    anchor_signature: Optional[Signature] = None

    def __post_init__(self):
        object.__setattr__(self, "revoked", _sorted(self.revoked))

    @cached_property
    def _fingerprints(self) -> frozenset:
        return frozenset(e.fingerprint for e in self.revoked)

    def fingerprints(self) -> frozenset:
        return self._fingerprints

    def check(self) -> None:
        require_int(self.sequence, "sequence", 0)
        require_int(self.issued_at, "issued_at")
        if len(self._fingerprints) != len(self.revoked):
            raise MalformedError("duplicate CRL entry")
        for entry in self.revoked:
            require_int(entry.revoked_at, "revoked_at")
            require_int(entry.reason_code, "reason_code", 0)

    def to_document(self, with_signature: bool = True) -> dict:
        doc = {
            "issued_at": self.issued_at,
            "revoked": [e.to_document() for e in self.revoked],
            "sequence": self.sequence,
            "type": CRL_TYPE,
        }
        if with_signature:
            if self.anchor_signature is None:
                raise MalformedError("CRL is unsigned")
            doc["anchor_signature"] = self.anchor_signature.to_document()
        return doc

    @classmethod
    def from_document(cls, doc) -> "CertificateRevocationList":
        require(doc, {"anchor_signature", "issued_at", "revoked", "sequence", "type"}, "CRL")
        if doc["type"] != CRL_TYPE or not isinstance(doc["revoked"], list):
            raise MalformedError("not a CRL document")
        crl = cls(
            sequence=require_int(doc["sequence"], "sequence", 0),
            revoked=tuple(RevocationEntry.from_document(e) for e in doc["revoked"]),
            issued_at=require_int(doc["issued_at"], "issued_at"),
            anchor_signature=Signature.from_document(doc["anchor_signature"]),
        )
        crl.check()
        return crl


TrustList = Union[CertificateTrustList, CertificateRevocationList]


def list_signing_bytes(lst: TrustList) -> bytes:
    return canonical_bytes(lst.to_document(with_signature=False))


def serialize_list(lst: TrustList) -> bytes:
    return canonical_bytes(lst.to_document())


def deserialize_list(data: bytes) -> TrustList:
    doc = parse_canonical(data)
    kind = doc.get("type") if isinstance(doc, dict) else None
    if kind == CTL_TYPE:
        return CertificateTrustList.from_document(doc)
    if kind == CRL_TYPE:
        return CertificateRevocationList.from_document(doc)
    raise MalformedError("document is neither a CTL nor a CRL")


def sign_list(anchor_keypair: KeyPair, lst: TrustList) -> TrustList:
    lst.check()
    unsigned = replace(lst, anchor_signature=None)
    return replace(lst, anchor_signature=crypto.sign(anchor_keypair.private_key, list_signing_bytes(unsigned)))


def verify_list(anchor_public_key: PublicKey, lst) -> bool:
    """True iff ``lst`` is structurally valid and signed by the anchor key."""
    if not isinstance(lst, (CertificateTrustList, CertificateRevocationList)):
        return False
    if lst.anchor_signature is None:
        return False
    try:
        lst.check()
        payload = list_signing_bytes(lst)
    except (MalformedError, AttributeError, TypeError, ValueError):
        return False
    return crypto.verify(anchor_public_key, payload, lst.anchor_signature)


@dataclass(frozen=True)
class TrustBundle:
    ctl: CertificateTrustList
    crl: CertificateRevocationList
    anchor_cert: Certificate

    @property
    def mode(self) -> TrustMode:
        return self.ctl.mode

    def to_document(self) -> dict:
        return {
            "anchor": self.anchor_cert.to_document(),
            "crl": self.crl.to_document(),
            "ctl": self.ctl.to_document(),
            "type": "TrustBundle",
        }

    @classmethod
    def from_document(cls, doc) -> "TrustBundle":
        require(doc, {"anchor", "crl", "ctl", "type"}, "bundle")
        if doc["type"] != "TrustBundle":
            raise MalformedError("not a trust bundle")
        return cls(
            CertificateTrustList.from_document(doc["ctl"]),
            CertificateRevocationList.from_document(doc["crl"]),
            Certificate.from_document(doc["anchor"]),
        )

    def serialize(self) -> bytes:
        return canonical_bytes(self.to_document())

    @classmethod
    def deserialize(cls, data: bytes) -> "TrustBundle":
        return cls.from_document(parse_canonical(data))


def verify_anchor_cert(cert: Certificate) -> bool:
    try:
        check_certificate(cert)
    except MalformedError:
        return False
    return (
        cert.role is Role.TRUST_ANCHOR
        and cert.self_signed
        and crypto.verify(cert.public_key, signing_bytes(cert), cert.signature)
    )


def verify_bundle(bundle: TrustBundle) -> bool:
    key = bundle.anchor_cert.public_key
    return verify_anchor_cert(bundle.anchor_cert) and verify_list(key, bundle.ctl) and verify_list(key, bundle.crl)


class UpdateStatus(str, enum.Enum):
    ACCEPTED = "Accepted"
    ROLLBACK_REJECTED = "RollbackRejected"
    BAD_SIGNATURE = "BadSignature"
    MODE_MISMATCH = "ModeMismatch"


@dataclass(frozen=True)
class UpdateResult:
    bundle: TrustBundle
    ctl_status: UpdateStatus
    crl_status: UpdateStatus

    @property
    def changed(self) -> bool:
        return UpdateStatus.ACCEPTED in (self.ctl_status, self.crl_status)


def try_update(current: TrustBundle, incoming: TrustBundle) -> UpdateResult:
    """Merge ``incoming`` into ``current`` component by component.

    Incoming lists are always checked against the *current* anchor key; a
    bundle that ships its own anchor certificate gains nothing from it.
    """
    key = current.anchor_cert.public_key

    if not verify_list(key, incoming.ctl):
        ctl_status = UpdateStatus.BAD_SIGNATURE
    elif incoming.ctl.mode is not current.ctl.mode:
        ctl_status = UpdateStatus.MODE_MISMATCH
    elif incoming.ctl.sequence <= current.ctl.sequence:
        ctl_status = UpdateStatus.ROLLBACK_REJECTED
    else:
        ctl_status = UpdateStatus.ACCEPTED

    if not verify_list(key, incoming.crl):
        crl_status = UpdateStatus.BAD_SIGNATURE
    elif incoming.crl.sequence <= current.crl.sequence:
        crl_status = UpdateStatus.ROLLBACK_REJECTED
    else:
        crl_status = UpdateStatus.ACCEPTED

    bundle = TrustBundle(
        incoming.ctl if ctl_status is UpdateStatus.ACCEPTED else current.ctl,
        incoming.crl if crl_status is UpdateStatus.ACCEPTED else current.crl,
        current.anchor_cert,
    )
    return UpdateResult(bundle, ctl_status, crl_status)
