"""Vendor-level certification authority.

A vendor keeps a self-signed root and, for device-type-level deployments,
one intermediate keypair per model.  Devices are certified at manufacturing
time by the model key, or directly by the root when a model has none.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .certificates import Certificate, CertificateChain, Role, SubjectIdentity, issue_certificate, self_sign
from .crypto import KeyPair, generate_keypair
from .errors import ProvisioningError


@dataclass
class ModelCA:
    model_id: str
    keypair: Optional[KeyPair] = None
    cert: Optional[Certificate] = None


@dataclass
class Vendor:
    vendor_id: str
    keypair: KeyPair
    root_cert: Certificate
    models: dict = field(default_factory=dict)

    @classmethod
    def create(cls, vendor_id: str, keypair: Optional[KeyPair] = None, not_before: int = 0, not_after: int = 2**31) -> "Vendor":
        keypair = keypair or generate_keypair()
        root = self_sign(keypair, SubjectIdentity(Role.VENDOR_ROOT, vendor_id), not_before, not_after)
        return cls(vendor_id, keypair, root)

    def add_model(self, model_id: str, keypair: Optional[KeyPair] = None, with_type_cert: bool = True) -> Optional[Certificate]:
        """Create the model's issuing credentials; returns its device-type cert (or None)."""
        if not with_type_cert:
            self.models[model_id] = ModelCA(model_id)
            return None
        keypair = keypair or generate_keypair()
        cert = issue_certificate(
            self.keypair,
            self.root_cert,
            SubjectIdentity(Role.DEVICE_TYPE, self.vendor_id, model_id),
            keypair.public_key,
            (self.root_cert.not_before, self.root_cert.not_after),
        )
        self.models[model_id] = ModelCA(model_id, keypair, cert)
        return cert

    def certify_device(self, model_id: str, serial: str, device_key: KeyPair, validity=None) -> CertificateChain:
        model = self.models.get(model_id)
        if model is None:
            raise ProvisioningError(f"unknown model {self.vendor_id}/{model_id}")
        issuer_key, issuer_cert = (model.keypair, model.cert) if model.cert else (self.keypair, self.root_cert)
        if validity is None:
            validity = (issuer_cert.not_before, issuer_cert.not_after)
        leaf = issue_certificate(
            issuer_key,
            issuer_cert,
            SubjectIdentity(Role.DEVICE, self.vendor_id, model_id, serial),
            device_key.public_key,
            validity,
        )
        if model.cert:
            return CertificateChain([leaf, model.cert, self.root_cert])
        return CertificateChain([leaf, self.root_cert])
