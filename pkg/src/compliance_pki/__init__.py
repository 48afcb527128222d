"""Compliance trust environment for wireless devices.

A PKI issues certificates to device models, an administrative authority
publishes signed trust and revocation lists, devices attest each other at
connection time, and a deterministic simulator measures how revoked models
become isolated.
"""

from .authority import Authority
from .certificates import (
    Certificate,
    CertificateChain,
    Reason,
    Role,
    SubjectIdentity,
    TrustMode,
    ValidationVerdict,
    canonical_serialize,
    deserialize_certificate,
    issue_certificate,
    self_sign,
    validate_chain,
)
from .crypto import Digest, KeyPair, PublicKey, Signature, digest, generate_keypair, sign, verify
from .device import BehaviorModel, DeviceAgent, DeviceKind, Variant, attempt_connection, provision, receive_update
from .handshake import AttestationRequest, AttestationResponse, LinkVerdict, evaluate_peer, initiate, mutual_handshake, respond
from .simulator import Scenario, ScenarioTrace, Simulator, compute_metrics, render_report, run
from .trust_lists import (
    CertificateRevocationList,
    CertificateTrustList,
    TrustBundle,
    UpdateStatus,
    sign_list,
    try_update,
    verify_list,
)
from .vendor import Vendor

__version__ = "0.1.0"
