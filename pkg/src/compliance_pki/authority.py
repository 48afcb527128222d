"""The administrative trust authority.

Holds the trust anchor, the registry of vendors and device models, and
publishes the signed CTL and CRL.  Every mutating call validates first and
only then changes state, so a refused call leaves the authority untouched.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import crypto
from .canonical import canonical_bytes, parse_canonical, require, require_int
from .certificates import Certificate, Role, SubjectIdentity, TrustMode, check_certificate, self_sign, signing_bytes
from .crypto import KeyPair
from .errors import AuthorityError, MalformedError
from .trust_lists import (
    CertificateRevocationList,
    CertificateTrustList,
    RevocationEntry,
    TrustBundle,
    TrustEntry,
    sign_list,
)

log = logging.getLogger(__name__)

STATE_TYPE = "AuthorityState"


@dataclass
class ModelRecord:
    cert: Optional[Certificate]  # absent for manufacturer-level deployments
    revoked: bool = False


@dataclass
class VendorRecord:
    root_cert: Certificate
    models: dict = field(default_factory=dict)
    revoked: bool = False

    @property
    def revoked_models(self) -> set:
        return {m for m, rec in self.models.items() if rec.revoked}


@dataclass(frozen=True)
class AuditEvent:
    index: int
    timestamp: int
    action: str
    actor: str
    details: dict

    def to_document(self) -> dict:
        return {
            "action": self.action,
            "actor": self.actor,
            "details": self.details,
            "index": self.index,
            "timestamp": self.timestamp,
        }


def derive_ctl_entries(vendors: dict, mode: TrustMode) -> list:
    """CTL content as a pure function of the registry.

    Revoked vendors and models stay listed: revocation is expressed on the
    CRL only, so a revoked chain is reported as Revoked, not UntrustedRoot.
    """
    entries = []
    for record in vendors.values():
        if mode is TrustMode.MANUFACTURER_LEVEL:
            entries.append(TrustEntry.from_certificate(record.root_cert))
        else:
            entries.extend(TrustEntry.from_certificate(m.cert) for m in record.models.values() if m.cert is not None)
    return entries


class Authority:
    def __init__(self, anchor_keypair: KeyPair, anchor_cert: Certificate, mode: TrustMode):
        self.anchor_keypair = anchor_keypair
        self.anchor_cert = anchor_cert
        self.mode = mode
        self.vendors: dict[str, VendorRecord] = {}
        self.revoked_keys: set[str] = set()
        self.audit_log: list[AuditEvent] = []
        self.ctl: Optional[CertificateTrustList] = None
        self.crl: Optional[CertificateRevocationList] = None

    @classmethod
    def create(
        cls,
        anchor_keypair: KeyPair,
        mode: TrustMode,
        now: int,
        not_after: int,
        not_before: Optional[int] = None,
        actor: str = "authority",
    ) -> "Authority":
        """Set up a fresh authority with empty lists at sequence 0."""
        not_before = now if not_before is None else not_before
        anchor = self_sign(anchor_keypair, SubjectIdentity(Role.TRUST_ANCHOR), not_before, not_after)
        auth = cls(anchor_keypair, anchor, TrustMode(mode))
        auth._audit(now, "init", actor, mode=auth.mode.value, anchor=anchor.fingerprint.hex())
        auth._publish_ctl(now, actor, sequence=0)
        auth._publish_crl(now, actor, [], sequence=0)
        return auth

    @property
    def ctl_sequence(self) -> int:
        return self.ctl.sequence

    @property
    def crl_sequence(self) -> int:
        return self.crl.sequence

    # -- publication -------------------------------------------------------

    def _audit(self, now: int, action: str, actor: str, **details) -> None:
        if self.audit_log and now < self.audit_log[-1].timestamp:
            raise AuthorityError(f"timestamp {now} precedes the last audit record")
        self.audit_log.append(AuditEvent(len(self.audit_log), now, action, actor, details))

    def _publish_ctl(self, now: int, actor: str, sequence: Optional[int] = None) -> None:
        seq = self.ctl.sequence + 1 if sequence is None else sequence
        ctl = CertificateTrustList(seq, self.mode, tuple(derive_ctl_entries(self.vendors, self.mode)), now)
        self.ctl = sign_list(self.anchor_keypair, ctl)
        self._audit(now, "publish_ctl", actor, sequence=seq, entries=len(ctl.entries))

    def _publish_crl(self, now: int, actor: str, entries: list, sequence: Optional[int] = None) -> None:
        seq = self.crl.sequence + 1 if sequence is None else sequence
        crl = CertificateRevocationList(seq, tuple(entries), now)
        self.crl = sign_list(self.anchor_keypair, crl)
        self._audit(now, "publish_crl", actor, sequence=seq, entries=len(crl.revoked))

    def _check_clock(self, now: int) -> None:
        if self.audit_log and now < self.audit_log[-1].timestamp:
            raise AuthorityError(f"timestamp {now} precedes the last audit record")

    def publish_bundle(self) -> TrustBundle:
        return TrustBundle(self.ctl, self.crl, self.anchor_cert)

    # -- registry ----------------------------------------------------------

    def _key_revoked(self, cert: Certificate) -> bool:
        return cert.public_key.encode() in self.revoked_keys or cert.fingerprint in self.crl.fingerprints()

    def register_vendor(self, vendor_id: str, vendor_root_cert: Certificate, now: int, actor: str = "registrar") -> None:
        self._check_clock(now)
        if vendor_id in self.vendors:
            raise AuthorityError(f"vendor {vendor_id!r} is already registered")
        try:
            check_certificate(vendor_root_cert)
        except MalformedError as exc:
            raise AuthorityError(f"malformed vendor root: {exc}") from None
        cert = vendor_root_cert
        if cert.role is not Role.VENDOR_ROOT or cert.subject.vendor_id != vendor_id:
            raise AuthorityError("certificate is not a vendor root for this vendor")
        if not cert.self_signed or not crypto.verify(cert.public_key, signing_bytes(cert), cert.signature):
            raise AuthorityError("vendor root must be validly self-signed")
        if not cert.not_before <= now <= cert.not_after:
            raise AuthorityError("vendor root is not valid at registration time")
        if self._key_revoked(cert):
            raise AuthorityError("vendor root key was previously revoked")

        self.vendors[vendor_id] = VendorRecord(cert)
        self._audit(now, "register_vendor", actor, vendor_id=vendor_id, fingerprint=cert.fingerprint.hex())
        if self.mode is TrustMode.MANUFACTURER_LEVEL:
            self._publish_ctl(now, actor)

    def register_model(
        self,
        vendor_id: str,
        model_id: str,
        device_type_cert: Optional[Certificate],
        now: int,
        actor: str = "registrar",
    ) -> None:
        """Register a device model.

        In manufacturer-level mode the device-type certificate is optional:
        devices may be issued straight from the vendor root.
        """
        self._check_clock(now)
        vendor = self.vendors.get(vendor_id)
        if vendor is None:
            raise AuthorityError(f"unknown vendor {vendor_id!r}")
        if vendor.revoked:
            raise AuthorityError(f"vendor {vendor_id!r} is revoked")
        if model_id in vendor.revoked_models:
            raise AuthorityError(f"model identifier {model_id!r} was revoked and cannot be reused")
        if model_id in vendor.models:
            raise AuthorityError(f"model {model_id!r} is already registered")
        try:
            SubjectIdentity(Role.DEVICE_TYPE, vendor_id, model_id).check()
        except MalformedError as exc:
            raise AuthorityError(str(exc)) from None

        cert = device_type_cert
        if cert is None:
            if self.mode is TrustMode.DEVICE_TYPE_LEVEL:
                raise AuthorityError("device-type-level mode requires a device-type certificate")
        else:
            try:
                check_certificate(cert)
            except MalformedError as exc:
                raise AuthorityError(f"malformed device-type certificate: {exc}") from None
            if cert.role is not Role.DEVICE_TYPE or cert.subject != SubjectIdentity(Role.DEVICE_TYPE, vendor_id, model_id):
                raise AuthorityError("certificate subject does not match the model")
            root = vendor.root_cert
            if cert.issuer_fingerprint != root.fingerprint or not crypto.verify(
                root.public_key, signing_bytes(cert), cert.signature
            ):
                raise AuthorityError("chain mismatch: certificate was not issued by the vendor root")
            if self._key_revoked(cert):
                raise AuthorityError("device-type key was previously revoked")

        vendor.models[model_id] = ModelRecord(cert)
        self._audit(
            now,
            "register_model",
            actor,
            vendor_id=vendor_id,
            model_id=model_id,
            fingerprint=cert.fingerprint.hex() if cert else None,
        )
        if self.mode is TrustMode.DEVICE_TYPE_LEVEL:
            self._publish_ctl(now, actor)

    def revoke(
        self,
        vendor_id: str,
        model_id: Optional[str] = None,
        now: int = 0,
        actor: str = "market-surveillance",
        reason_code: int = 1,
    ) -> Certificate:
        """Revoke a vendor or a model and publish a new CRL.

        Returns the certificate whose fingerprint was added.  In
        manufacturer-level mode the CTL has no per-model granularity, so a
        model target revokes the whole vendor root.
        """
        self._check_clock(now)
        vendor = self.vendors.get(vendor_id)
        if vendor is None:
            raise AuthorityError(f"unknown vendor {vendor_id!r}")
        model = None
        if model_id is not None:
            model = vendor.models.get(model_id)
            if model is None:
                raise AuthorityError(f"unknown model {vendor_id}/{model_id}")
        if vendor.revoked or (model is not None and model.revoked):
            raise AuthorityError("target is already revoked")

        if model is None or self.mode is TrustMode.MANUFACTURER_LEVEL or model.cert is None:
            target = vendor.root_cert
            vendor.revoked = True
        else:
            target = model.cert
        if model is not None:
            model.revoked = True

        self.revoked_keys.add(target.public_key.encode())
        entries = list(self.crl.revoked) + [RevocationEntry(target.fingerprint, now, reason_code)]
        self._audit(
            now,
            "revoke",
            actor,
            vendor_id=vendor_id,
            model_id=model_id,
            fingerprint=target.fingerprint.hex(),
            reason_code=reason_code,
        )
        self._publish_crl(now, actor, entries)
        log.info("revoked %s (%s)", target.subject.label(), target.fingerprint.hex()[:16])
        return target

    # -- persistence -------------------------------------------------------

    def to_document(self) -> dict:
        registry = {}
        for vid, rec in self.vendors.items():
            registry[vid] = {
                "models": {
                    mid: {"cert": m.cert.to_document() if m.cert else None, "revoked": m.revoked}
                    for mid, m in rec.models.items()
                },
                "revoked": rec.revoked,
                "root_cert": rec.root_cert.to_document(),
            }
        return {
            "anchor_cert": self.anchor_cert.to_document(),
            "anchor_key": self.anchor_keypair.to_document(),
            "audit_log": [e.to_document() for e in self.audit_log],
            "crl": self.crl.to_document(),
            "ctl": self.ctl.to_document(),
            "mode": self.mode.value,
            "registry": registry,
            "revoked_keys": sorted(self.revoked_keys),
            "type": STATE_TYPE,
        }

    def serialize(self) -> bytes:
        return canonical_bytes(self.to_document())

    @classmethod
    def from_document(cls, doc) -> "Authority":
        keys = {"anchor_cert", "anchor_key", "audit_log", "crl", "ctl", "mode", "registry", "revoked_keys", "type"}
        require(doc, keys, "authority state")
        if doc["type"] != STATE_TYPE:
            raise MalformedError("not an authority state document")
        auth = cls(
            KeyPair.from_document(doc["anchor_key"]),
            Certificate.from_document(doc["anchor_cert"]),
            TrustMode.parse(doc["mode"]),
        )
        if auth.anchor_cert.public_key != auth.anchor_keypair.public_key:
            raise MalformedError("anchor key does not match anchor certificate")
        for vid, rec in doc["registry"].items():
            vendor = VendorRecord(Certificate.from_document(rec["root_cert"]), revoked=bool(rec["revoked"]))
            for mid, m in rec["models"].items():
                cert = Certificate.from_document(m["cert"]) if m["cert"] is not None else None
                vendor.models[mid] = ModelRecord(cert, bool(m["revoked"]))
            auth.vendors[vid] = vendor
        auth.revoked_keys = set(doc["revoked_keys"])
        for e in doc["audit_log"]:
            auth.audit_log.append(
                AuditEvent(require_int(e["index"], "index"), require_int(e["timestamp"], "timestamp"),
                           e["action"], e["actor"], e["details"])
            )
        auth.ctl = CertificateTrustList.from_document(doc["ctl"])
        auth.crl = CertificateRevocationList.from_document(doc["crl"])
        return auth

    @classmethod
    def deserialize(cls, data: bytes) -> "Authority":
        return cls.from_document(parse_canonical(data))

    def save(self, path) -> None:
        Path(path).write_bytes(self.serialize())

    @classmethod
    def load(cls, path) -> "Authority":
        return cls.deserialize(Path(path).read_bytes())

    def export_audit_log(self) -> str:
        """Audit log as line-delimited canonical JSON records."""
        return "".join(canonical_bytes(e.to_document()).decode("utf-8") + "\n" for e in self.audit_log)
