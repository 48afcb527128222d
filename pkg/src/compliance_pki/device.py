"""Simulated RLAN devices and their behaviour models."""

from __future__ import annotations

import enum
import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .canonical import canonical_bytes, parse_canonical, require
from .certificates import CertificateChain, Reason, ValidationVerdict, validate_chain
from .crypto import KeyPair, generate_keypair
from .errors import MalformedError, ProvisioningError
from .handshake import LinkVerdict, NONCE_LENGTH, mutual_handshake
from .trust_lists import TrustBundle, UpdateResult, try_update
from .vendor import Vendor


class DeviceKind(str, enum.Enum):
    ACCESS_POINT = "AccessPoint"
    STATION = "Station"


class Variant(str, enum.Enum):
    COMPLIANT = "Compliant"
    NO_CERTIFICATE = "NoCertificate"
    REVOKED_MODEL_STILL_TRANSMITTING = "RevokedModelStillTransmitting"
    SKIPS_VALIDATION = "SkipsValidation"
    STALE_TRUST_DATA = "StaleTrustData"


@dataclass(frozen=True)
class BehaviorModel:
    variant: Variant = Variant.COMPLIANT
    parameters: dict = field(default_factory=dict)

    @property
    def validates_peers(self) -> bool:
        return self.variant is not Variant.SKIPS_VALIDATION

    @property
    def accepts_updates(self) -> bool:
        return self.variant is not Variant.STALE_TRUST_DATA

    @property
    def presents_certificate(self) -> bool:
        return self.variant is not Variant.NO_CERTIFICATE

    @classmethod
    def parse(cls, value) -> "BehaviorModel":
        if isinstance(value, BehaviorModel):
            return value
        if isinstance(value, dict):
            return cls(_variant(value.get("variant")), dict(value.get("parameters") or {}))
        return cls(_variant(value))

    def to_document(self) -> dict:
        return {"parameters": self.parameters, "variant": self.variant.value}


def _variant(value) -> Variant:
    try:
        return Variant(value)
    except ValueError:
        raise MalformedError(f"unknown behaviour {value!r}") from None


COMPLIANT = BehaviorModel()


@dataclass
class Link:
    verdict: LinkVerdict
    peer_chain: Optional[CertificateChain]
    since: int = 0


@dataclass
class DeviceAgent:
    device_id: str
    kind: DeviceKind
    keystore: KeyPair
    chain: Optional[CertificateChain]
    bundle: TrustBundle
    behavior: BehaviorModel = COMPLIANT
    link_table: dict = field(default_factory=dict)
    rng_seed: Optional[int] = None
    nonce_counter: int = 0

    def next_nonce(self) -> bytes:
        """Fresh 16-byte nonce; reproducible when the device has an rng seed."""
        self.nonce_counter += 1
        if self.rng_seed is None:
            return os.urandom(NONCE_LENGTH)
        material = b"nonce\x00%d\x00%s\x00%d" % (self.rng_seed, self.device_id.encode("utf-8"), self.nonce_counter)
        return hashlib.sha256(material).digest()[:NONCE_LENGTH]

    def links(self) -> list[str]:
        return sorted(self.link_table)

    def to_document(self) -> dict:
        return {
            "behavior": self.behavior.to_document(),
            "bundle": self.bundle.to_document(),
            "chain": self.chain.to_document() if self.chain is not None else None,
            "device_id": self.device_id,
            "keystore": self.keystore.to_document(),
            "kind": self.kind.value,
            "link_table": {
                peer: {
                    "peer_chain": link.peer_chain.to_document() if link.peer_chain is not None else None,
                    "since": link.since,
                    "verdict": link.verdict.to_document(),
                }
                for peer, link in self.link_table.items()
            },
            "nonce_counter": self.nonce_counter,
            "rng_seed": self.rng_seed,
            "type": "DeviceState",
        }

    @classmethod
    def from_document(cls, doc) -> "DeviceAgent":
        keys = {"behavior", "bundle", "chain", "device_id", "keystore", "kind", "link_table",
                "nonce_counter", "rng_seed", "type"}
        require(doc, keys, "device state")
        if doc["type"] != "DeviceState":
            raise MalformedError("not a device state document")
        links = {}
        for peer, rec in doc["link_table"].items():
            chain = CertificateChain.from_document(rec["peer_chain"]) if rec["peer_chain"] is not None else None
            links[peer] = Link(LinkVerdict.from_document(rec["verdict"]), chain, rec["since"])
        device = cls(
            device_id=doc["device_id"],
            kind=DeviceKind(doc["kind"]),
            keystore=KeyPair.from_document(doc["keystore"]),
            chain=CertificateChain.from_document(doc["chain"]) if doc["chain"] is not None else None,
            bundle=TrustBundle.from_document(doc["bundle"]),
            behavior=BehaviorModel.parse(doc["behavior"]),
            link_table=links,
            rng_seed=doc["rng_seed"],
            nonce_counter=doc["nonce_counter"],
        )
        return device

    def serialize(self) -> bytes:
        return canonical_bytes(self.to_document())

    @classmethod
    def deserialize(cls, data: bytes) -> "DeviceAgent":
        return cls.from_document(parse_canonical(data))

    def save(self, path) -> None:
        Path(path).write_bytes(self.serialize())

    @classmethod
    def load(cls, path) -> "DeviceAgent":
        return cls.deserialize(Path(path).read_bytes())


def provision(
    vendor: Vendor,
    model_id: str,
    device_serial: str,
    seed: Optional[bytes],
    bundle: TrustBundle,
    device_id: Optional[str] = None,
    kind: DeviceKind = DeviceKind.STATION,
    behavior: BehaviorModel = COMPLIANT,
    rng_seed: Optional[int] = None,
    validity=None,
) -> DeviceAgent:
    """Manufacture a device: fresh keypair, leaf certificate, factory trust bundle."""
    if model_id not in vendor.models:
        raise ProvisioningError(f"unknown model {vendor.vendor_id}/{model_id}")
    keystore = generate_keypair(seed)
    behavior = BehaviorModel.parse(behavior)
    chain = None
    if behavior.presents_certificate:
        chain = vendor.certify_device(model_id, device_serial, keystore, validity)
    return DeviceAgent(
        device_id=device_id or f"{vendor.vendor_id}/{model_id}/{device_serial}",
        kind=DeviceKind(kind),
        keystore=keystore,
        chain=chain,
        bundle=bundle,
        behavior=behavior,
        rng_seed=rng_seed,
    )


@dataclass
class DeviceUpdate:
    device_id: str
    result: Optional[UpdateResult]  # None when the device ignored the delivery
    torn_down: list = field(default_factory=list)  # (peer_id, reason)


def revalidate_links(device: DeviceAgent, now: int) -> list:
    """Drop every link whose peer chain no longer validates; returns (peer, reason) pairs."""
    dropped = []
    if not device.behavior.validates_peers:
        return dropped
    for peer_id in sorted(device.link_table):
        link = device.link_table[peer_id]
        if link.peer_chain is None:
            verdict = ValidationVerdict.of(Reason.MALFORMED)
        else:
            verdict = validate_chain(link.peer_chain, device.bundle.ctl, device.bundle.crl, now)
        if not verdict.accepted:
            del device.link_table[peer_id]
            dropped.append((peer_id, verdict.reason))
    return dropped


def receive_update(device: DeviceAgent, incoming: TrustBundle, now: int) -> DeviceUpdate:
    if not device.behavior.accepts_updates:
        return DeviceUpdate(device.device_id, None)
    result = try_update(device.bundle, incoming)
    device.bundle = result.bundle
    torn = revalidate_links(device, now) if result.changed else []
    return DeviceUpdate(device.device_id, result, torn)


@dataclass
class ConnectionRecord:
    a: str
    b: str
    tick: int
    verdict_a: LinkVerdict
    verdict_b: LinkVerdict
    chain_a: list
    chain_b: list

    def to_document(self) -> dict:
        return {
            "a": self.a,
            "b": self.b,
            "chain_a": self.chain_a,
            "chain_b": self.chain_b,
            "tick": self.tick,
            "verdict_a": self.verdict_a.to_document(),
            "verdict_b": self.verdict_b.to_document(),
        }


def _fingerprints(device: DeviceAgent) -> list:
    return [fp.hex() for fp in device.chain.fingerprints()] if device.chain is not None else []


def attempt_connection(a: DeviceAgent, b: DeviceAgent, now: int) -> ConnectionRecord:
    """Run the mutual handshake and update each side's link table on its own verdict."""
    verdict_a, verdict_b = mutual_handshake(a, b, now)
    for local, peer, verdict in ((a, b, verdict_a), (b, a, verdict_b)):
        if verdict.established:
            local.link_table[peer.device_id] = Link(verdict, peer.chain, now)
        else:
            local.link_table.pop(peer.device_id, None)
    return ConnectionRecord(a.device_id, b.device_id, now, verdict_a, verdict_b, _fingerprints(a), _fingerprints(b))
