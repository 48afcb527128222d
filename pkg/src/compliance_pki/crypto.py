"""Signature and digest primitives.

Ed25519 is the only signature scheme wired in; keys and signatures carry a
scheme tag so another scheme can be added without changing document formats.
Digests are SHA-256.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey

from .canonical import b64url_decode, b64url_encode
from .errors import MalformedError

SCHEME = "ed25519"
DIGEST_ALGORITHM = "sha256"
SEED_LENGTH = 32
_SIG_LENGTH = 64
_RAW = serialization.Encoding.Raw


@dataclass(frozen=True)
class PublicKey:
    scheme: str
    data: bytes

    def encode(self) -> str:
        return f"{self.scheme}:{b64url_encode(self.data)}"

    @classmethod
    def decode(cls, text: str) -> "PublicKey":
        if not isinstance(text, str) or ":" not in text:
            raise MalformedError("public key: expected 'scheme:base64url'")
        scheme, _, body = text.partition(":")
        key = cls(scheme, b64url_decode(body))
        key.check()
        return key

    def check(self) -> None:
        if self.scheme != SCHEME:
            raise MalformedError(f"unsupported key scheme {self.scheme!r}")
        if len(self.data) != 32:
            raise MalformedError("ed25519 public key must be 32 bytes")


@dataclass(frozen=True)
class KeyPair:
    public_key: PublicKey
    private_key: bytes  # raw 32-byte Ed25519 seed
    scheme: str = SCHEME

    def to_document(self) -> dict:
        return {
            "private_key": f"{self.scheme}:{b64url_encode(self.private_key)}",
            "public_key": self.public_key.encode(),
        }

    @classmethod
    def from_document(cls, doc: dict) -> "KeyPair":
        if not isinstance(doc, dict) or set(doc) != {"private_key", "public_key"}:
            raise MalformedError("keypair: expected fields private_key, public_key")
        scheme, _, body = str(doc["private_key"]).partition(":")
        if scheme != SCHEME:
            raise MalformedError(f"unsupported key scheme {scheme!r}")
        pair = generate_keypair(b64url_decode(body))
        if pair.public_key != PublicKey.decode(doc["public_key"]):
            raise MalformedError("keypair: public key does not match private key")
        return pair


@dataclass(frozen=True)
class Signature:
    scheme_id: str
    value: bytes

    def to_document(self) -> dict:
        return {"scheme": self.scheme_id, "value": b64url_encode(self.value)}

    @classmethod
    def from_document(cls, doc) -> "Signature":
        if not isinstance(doc, dict) or set(doc) != {"scheme", "value"}:
            raise MalformedError("signature: expected fields scheme, value")
        if doc["scheme"] != SCHEME:
            raise MalformedError(f"unsupported signature scheme {doc['scheme']!r}")
        return cls(doc["scheme"], b64url_decode(doc["value"]))


@dataclass(frozen=True)
class Digest:
    algorithm_id: str
    value: bytes

    def hex(self) -> str:
        return self.value.hex()

    @classmethod
    def from_hex(cls, text: str) -> "Digest":
        if not isinstance(text, str) or len(text) != 64 or text != text.lower():
            raise MalformedError("fingerprint: expected 64 lowercase hex characters")
        try:
            return cls(DIGEST_ALGORITHM, bytes.fromhex(text))
        except ValueError:
            raise MalformedError("fingerprint: expected 64 lowercase hex characters") from None


def generate_keypair(seed: bytes | None = None) -> KeyPair:
    """Create an Ed25519 keypair, deterministically when ``seed`` is given."""
    if seed is None:
        seed = os.urandom(SEED_LENGTH)
    if not isinstance(seed, (bytes, bytearray)) or len(seed) != SEED_LENGTH:
        raise MalformedError(f"seed must be exactly {SEED_LENGTH} bytes")
    sk = Ed25519PrivateKey.from_private_bytes(bytes(seed))
    pk = sk.public_key().public_bytes(_RAW, serialization.PublicFormat.Raw)
    return KeyPair(PublicKey(SCHEME, pk), bytes(seed))


def seed_from_label(*parts: object) -> bytes:
    """Derive a 32-byte key seed from printable labels (test and simulation use)."""
    return hashlib.sha256("\x1f".join(str(p) for p in parts).encode("utf-8")).digest()


def sign(private_key: bytes | KeyPair, message: bytes) -> Signature:
    if isinstance(private_key, KeyPair):
        private_key = private_key.private_key
    if not isinstance(private_key, (bytes, bytearray)) or len(private_key) != SEED_LENGTH:
        raise MalformedError("malformed ed25519 private key")
    sk = Ed25519PrivateKey.from_private_bytes(bytes(private_key))
    return Signature(SCHEME, sk.sign(bytes(message)))


def verify(public_key: PublicKey, message: bytes, sig: Signature) -> bool:
    """True iff ``sig`` is a signature over exactly ``message`` by ``public_key``.

    Never raises: malformed keys or signatures are simply a false verdict.
    """
    try:
        if public_key.scheme != SCHEME or sig.scheme_id != SCHEME:
            return False
        if len(public_key.data) != 32 or len(sig.value) != _SIG_LENGTH:
            return False
        Ed25519PublicKey.from_public_bytes(public_key.data).verify(sig.value, bytes(message))
        return True
    except (InvalidSignature, ValueError, TypeError, AttributeError):
        return False


def digest(message: bytes) -> Digest:
    return Digest(DIGEST_ALGORITHM, hashlib.sha256(message).digest())
