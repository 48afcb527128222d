"""Canonical JSON encoding.

Documents are UTF-8 JSON with sorted keys, no insignificant whitespace,
integers only (no floats), and byte strings as unpadded base64url.
Parsing is strict: the input must already be in canonical form, so every
encoded document has exactly one byte representation.
"""

from __future__ import annotations

import base64
import json
import re
from typing import Any

from .errors import MalformedError

_B64URL = re.compile(r"^[A-Za-z0-9_-]*$")


def canonical_bytes(obj: Any) -> bytes:
    _reject_floats(obj)
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)
    return text.encode("utf-8")


def parse_canonical(data: bytes) -> Any:
    """Parse ``data`` and require that it is byte-identical to its canonical form."""
    try:
        text = data.decode("utf-8")
        obj = json.loads(text)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedError(f"not a JSON document: {exc}") from None
    try:
        again = canonical_bytes(obj)
    except (TypeError, ValueError) as exc:
        raise MalformedError(str(exc)) from None
    if again != data:
        raise MalformedError("document is not in canonical form")
    return obj


def _reject_floats(obj: Any) -> None:
    if isinstance(obj, float):
        raise MalformedError("floating point values are not allowed")
    if isinstance(obj, dict):
        for v in obj.values():
            _reject_floats(v)
    elif isinstance(obj, (list, tuple)):
        for v in obj:
            _reject_floats(v)


def b64url_encode(data: bytes) -> str:
    return base64.urlsafe_b64encode(data).rstrip(b"=").decode("ascii")


def b64url_decode(text: str) -> bytes:
    """Strict unpadded base64url decode; non-canonical encodings are rejected."""
    if not isinstance(text, str) or not _B64URL.match(text) or len(text) % 4 == 1:
        raise MalformedError("invalid base64url string")
    raw = base64.urlsafe_b64decode(text + "=" * (-len(text) % 4))
    if b64url_encode(raw) != text:
        # nonzero trailing bits would let two strings decode to the same bytes
        raise MalformedError("non-canonical base64url string")
    return raw


def require(doc: Any, keys: set[str], what: str) -> dict:
    """Check that ``doc`` is an object with exactly ``keys``."""
    if not isinstance(doc, dict):
        raise MalformedError(f"{what}: expected an object")
    if set(doc) != keys:
        raise MalformedError(f"{what}: expected fields {sorted(keys)}, got {sorted(doc)}")
    return doc


def require_int(value: Any, what: str, minimum: int | None = None) -> int:
    if type(value) is not int:
        raise MalformedError(f"{what}: expected an integer")
    if minimum is not None and value < minimum:
        raise MalformedError(f"{what}: must be >= {minimum}")
    return value


def require_str(value: Any, what: str) -> str:
    if not isinstance(value, str):
        raise MalformedError(f"{what}: expected a string")
    return value
