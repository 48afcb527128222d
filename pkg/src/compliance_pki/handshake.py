"""Post-association mutual attestation.

Each side sends a 16-byte nonce; the peer answers with its certificate
chain, the echoed nonce, a fresh nonce of its own, and a signature by its
device key over the transcript.  A protocol-following device keeps the link
only when its own check passes and the peer reports acceptance too.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

from . import crypto
from .canonical import b64url_decode, b64url_encode, canonical_bytes, parse_canonical, require, require_int
from .certificates import OK, CertificateChain, Reason, ValidationVerdict, validate_chain
from .crypto import Signature
from .errors import MalformedError, ProvisioningError

if TYPE_CHECKING:
    from .device import DeviceAgent

NONCE_LENGTH = 16
_TRANSCRIPT_TAG = b"compliance-pki/attest/v1\x00"


@dataclass(frozen=True)
class AttestationRequest:
    nonce: bytes
    ctl_sequence: int
    crl_sequence: int

    def __post_init__(self):
        if len(self.nonce) != NONCE_LENGTH:
            raise MalformedError(f"nonce must be {NONCE_LENGTH} bytes")

    def to_document(self) -> dict:
        return {
            "crl_sequence": self.crl_sequence,
            "ctl_sequence": self.ctl_sequence,
            "nonce": b64url_encode(self.nonce),
            "type": "AttestationRequest",
        }

    @classmethod
    def from_document(cls, doc) -> "AttestationRequest":
        require(doc, {"crl_sequence", "ctl_sequence", "nonce", "type"}, "request")
        if doc["type"] != "AttestationRequest":
            raise MalformedError("not an attestation request")
        return cls(
            b64url_decode(doc["nonce"]),
            require_int(doc["ctl_sequence"], "ctl_sequence", 0),
            require_int(doc["crl_sequence"], "crl_sequence", 0),
        )


def transcript_bytes(echoed_nonce: bytes, responder_nonce: bytes, chain: CertificateChain) -> bytes:
    # all parts are fixed length, so plain concatenation is unambiguous
    return _TRANSCRIPT_TAG + echoed_nonce + responder_nonce + b"".join(fp.value for fp in chain.fingerprints())


@dataclass(frozen=True)
class AttestationResponse:
    chain: CertificateChain
    echoed_nonce: bytes
    responder_nonce: bytes
    signature: Signature

    def to_document(self) -> dict:
        return {
            "chain": self.chain.to_document(),
            "echoed_nonce": b64url_encode(self.echoed_nonce),
            "responder_nonce": b64url_encode(self.responder_nonce),
            "signature": self.signature.to_document(),
            "type": "AttestationResponse",
        }

    @classmethod
    def from_document(cls, doc) -> "AttestationResponse":
        require(doc, {"chain", "echoed_nonce", "responder_nonce", "signature", "type"}, "response")
        if doc["type"] != "AttestationResponse":
            raise MalformedError("not an attestation response")
        return cls(
            CertificateChain.from_document(doc["chain"]),
            b64url_decode(doc["echoed_nonce"]),
            b64url_decode(doc["responder_nonce"]),
            Signature.from_document(doc["signature"]),
        )

    def serialize(self) -> bytes:
        return canonical_bytes(self.to_document())

    @classmethod
    def deserialize(cls, data: bytes) -> "AttestationResponse":
        return cls.from_document(parse_canonical(data))


@dataclass(frozen=True)
class LinkVerdict:
    established: bool
    local_view: ValidationVerdict
    peer_reported: Optional[ValidationVerdict] = None
    stale_hint: Optional[dict] = None

    def __post_init__(self):
        if self.established and not (
            self.local_view.accepted and (self.peer_reported is None or self.peer_reported.accepted)
        ):
            raise ValueError("a link can only be established on Ok verdicts")

    def to_document(self) -> dict:
        return {
            "established": self.established,
            "local_view": self.local_view.reason.value,
            "peer_reported": self.peer_reported.reason.value if self.peer_reported else None,
            "stale_hint": self.stale_hint,
        }

    @classmethod
    def from_document(cls, doc) -> "LinkVerdict":
        require(doc, {"established", "local_view", "peer_reported", "stale_hint"}, "link verdict")
        try:
            local = ValidationVerdict.of(Reason(doc["local_view"]))
            peer = ValidationVerdict.of(Reason(doc["peer_reported"])) if doc["peer_reported"] is not None else None
        except ValueError:
            raise MalformedError("unknown verdict reason") from None
        return cls(bool(doc["established"]), local, peer, doc["stale_hint"])


def initiate(local: "DeviceAgent") -> AttestationRequest:
    return AttestationRequest(local.next_nonce(), local.bundle.ctl.sequence, local.bundle.crl.sequence)


def respond(local: "DeviceAgent", req: AttestationRequest) -> AttestationResponse:
    if local.chain is None:
        raise ProvisioningError(f"device {local.device_id} holds no certificate chain")
    responder_nonce = local.next_nonce()
    sig = crypto.sign(local.keystore.private_key, transcript_bytes(req.nonce, responder_nonce, local.chain))
    return AttestationResponse(local.chain, req.nonce, responder_nonce, sig)


def evaluate_peer(
    local: "DeviceAgent", req_sent: AttestationRequest, resp: Optional[AttestationResponse], now: int
) -> ValidationVerdict:
    """Judge a peer's response; a missing response counts as Malformed."""
    if not isinstance(resp, AttestationResponse) or not isinstance(resp.chain, CertificateChain):
        return ValidationVerdict.of(Reason.MALFORMED)
    if len(resp.chain) == 0 or len(resp.responder_nonce) != NONCE_LENGTH:
        return ValidationVerdict.of(Reason.MALFORMED)
    if resp.echoed_nonce != req_sent.nonce:
        return ValidationVerdict.of(Reason.BAD_SIGNATURE)
    try:
        transcript = transcript_bytes(resp.echoed_nonce, resp.responder_nonce, resp.chain)
        leaf_key = resp.chain.leaf.public_key
    except (MalformedError, AttributeError, TypeError):
        return ValidationVerdict.of(Reason.MALFORMED)
    if not crypto.verify(leaf_key, transcript, resp.signature):
        return ValidationVerdict.of(Reason.BAD_SIGNATURE)
    return validate_chain(resp.chain, local.bundle.ctl, local.bundle.crl, now)


def _stale_hint(local: "DeviceAgent", peer_req: AttestationRequest) -> Optional[dict]:
    ours = local.bundle
    if peer_req.ctl_sequence > ours.ctl.sequence or peer_req.crl_sequence > ours.crl.sequence:
        return {"peer_crl_sequence": peer_req.crl_sequence, "peer_ctl_sequence": peer_req.ctl_sequence}
    return None


def _answer(responder: "DeviceAgent", req: AttestationRequest) -> Optional[AttestationResponse]:
    # a device without credentials never answers; the requester times out
    return respond(responder, req) if responder.chain is not None else None


def mutual_handshake(a: "DeviceAgent", b: "DeviceAgent", now: int) -> tuple[LinkVerdict, LinkVerdict]:
    req_a, req_b = initiate(a), initiate(b)
    resp_b, resp_a = _answer(b, req_a), _answer(a, req_b)

    view_a = OK if not a.behavior.validates_peers else evaluate_peer(a, req_a, resp_b, now)
    view_b = OK if not b.behavior.validates_peers else evaluate_peer(b, req_b, resp_a, now)

    def side(local, view, peer_view, peer_req):
        hint = _stale_hint(local, peer_req)
        if not local.behavior.validates_peers:
            # accepts anyone and ignores what the peer reports
            return LinkVerdict(True, OK, None, hint)
        return LinkVerdict(view.accepted and peer_view.accepted, view, peer_view, hint)

    return side(a, view_a, view_b, req_b), side(b, view_b, view_a, req_a)
