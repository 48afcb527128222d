"""Independent brute-force chain checker.

Re-derives every validation condition straight from certificate fields using
only the standard library and the raw Ed25519 primitive.  It deliberately
shares no encoding, fingerprinting or validation code with the package.
"""

import base64
import hashlib
import json

from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PublicKey

ZERO = "0" * 64
ROLE_SEQUENCES = {
    ("Device", "VendorRoot"),
    ("Device", "DeviceType", "VendorRoot"),
}


def _b64(raw):
    return base64.urlsafe_b64encode(raw).decode().rstrip("=")


def _subject_doc(s):
    doc = {"role": s.role.value if hasattr(s.role, "value") else s.role}
    for name in ("vendor_id", "model_id", "device_serial"):
        if getattr(s, name):
            doc[name] = getattr(s, name)
    return doc


def _doc(cert, with_sig=True):
    doc = {
        "issuer_fingerprint": cert.issuer_fingerprint.value.hex(),
        "not_after": cert.not_after,
        "not_before": cert.not_before,
        "public_key": "ed25519:" + _b64(cert.public_key.data),
        "subject": _subject_doc(cert.subject),
        "version": cert.version,
    }
    if with_sig:
        doc["signature"] = {"scheme": cert.signature.scheme_id, "value": _b64(cert.signature.value)}
    return doc


def _bytes(doc):
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode()


def fingerprint_hex(cert):
    return hashlib.sha256(_bytes(_doc(cert))).hexdigest()


def _sig_ok(pub, cert):
    try:
        Ed25519PublicKey.from_public_bytes(pub).verify(cert.signature.value, _bytes(_doc(cert, False)))
        return True
    except Exception:
        return False


def _ident_ok(v):
    return isinstance(v, str) and 0 < len(v.encode()) <= 128 and all(not (ord(c) < 32 or 127 <= ord(c) <= 159) for c in v)


def _malformed(cert):
    try:
        role = cert.subject.role.value
    except AttributeError:
        return True
    s = cert.subject
    need = {
        "vendor_id": role != "TrustAnchor",
        "model_id": role in ("DeviceType", "Device"),
        "device_serial": role == "Device",
    }
    for name, present in need.items():
        v = getattr(s, name)
        if present and not _ident_ok(v):
            return True
        if not present and v != "":
            return True
    if cert.version != 1 or cert.public_key.scheme != "ed25519" or len(cert.public_key.data) != 32:
        return True
    if type(cert.not_before) is not int or type(cert.not_after) is not int or cert.not_before >= cert.not_after:
        return True
    if cert.signature is None or cert.signature.scheme_id != "ed25519":
        return True
    return len(cert.issuer_fingerprint.value) != 32


def check_chain(certs, ctl_mode, ctl_fps, crl_fps, now, max_trust_age=None, list_issued=(0, 0)):
    """Return the verdict reason string for a chain (list of certificates).

    ``ctl_fps``/``crl_fps`` are sets of lowercase hex fingerprints.
    """
    certs = list(certs)
    if len(certs) not in (2, 3):
        return "Malformed"
    if any(_malformed(c) for c in certs):
        return "Malformed"
    roles = tuple(c.subject.role.value for c in certs)
    if roles not in ROLE_SEQUENCES:
        return "Malformed"

    # every signature, checked against the key of the next element up
    for i, c in enumerate(certs):
        signer = certs[i + 1] if i + 1 < len(certs) else c
        if not _sig_ok(signer.public_key.data, c):
            return "BadSignature"

    fps = [fingerprint_hex(c) for c in certs]
    for i in range(len(certs) - 1):
        child, parent = certs[i], certs[i + 1]
        if child.issuer_fingerprint.value.hex() != fps[i + 1]:
            return "BrokenChain"
        if child.subject.vendor_id != parent.subject.vendor_id:
            return "BrokenChain"
        if parent.subject.role.value == "DeviceType" and child.subject.model_id != parent.subject.model_id:
            return "BrokenChain"
    if certs[-1].issuer_fingerprint.value.hex() != ZERO:
        return "BrokenChain"

    if ctl_mode == "ManufacturerLevel":
        point = fps[-1]
    else:
        point = next((fps[i] for i, r in enumerate(roles) if r == "DeviceType"), None)
    if point is None or point not in ctl_fps:
        return "UntrustedRoot"

    if any(fp in crl_fps for fp in fps):
        return "Revoked"

    for c in certs:
        if now < c.not_before:
            return "NotYetValid"
        if now > c.not_after:
            return "Expired"

    if max_trust_age is not None and now - min(list_issued) > max_trust_age:
        return "StaleTrustData"
    return "Ok"


# -- isolation, recomputed from simulator state snapshots -------------------


def _snapshot(scenario_doc, n_events):
    """Run the first ``n_events`` events; return (directed link entries, compliant set, revoked set)."""
    from compliance_pki.simulator import Scenario, Simulator

    doc = dict(scenario_doc, events=scenario_doc["events"][:n_events])
    doc["horizon"] = max([e["tick"] for e in doc["events"]] + [0])
    sim = Simulator(Scenario.from_document(doc))
    sim.run()
    crl = {entry.fingerprint.hex() for entry in sim.authority.crl.revoked}
    revoked, compliant = set(), set()
    for did, dev in sim.devices.items():
        fps = {fp.hex() for fp in dev.chain.fingerprints()} if dev.chain else set()
        if fps & crl:
            revoked.add(did)
        elif fps and dev.behavior.variant.value == "Compliant":
            compliant.add(did)
    entries = {(o, p) for o, dev in sim.devices.items() for p in dev.link_table}
    return entries, compliant, revoked


def brute_force_isolation(scenario_doc):
    """Isolation tick by replaying every event prefix from scratch."""
    events = scenario_doc["events"]
    horizon = scenario_doc.get("horizon", max([e["tick"] for e in events] + [0]))
    bad_ticks = set()
    prev_entries = set()
    end_state_bad = {}
    for k in range(1, len(events) + 1):
        tick = events[k - 1]["tick"]
        entries, compliant, revoked = _snapshot(scenario_doc, k)
        for o, p in entries - prev_entries:
            if o in compliant and p in revoked:
                bad_ticks.add(tick)
        prev_entries = entries
        if k == len(events) or events[k]["tick"] != tick:
            end_state_bad[tick] = any(o in compliant and p in revoked for o, p in entries)
    # a bad end state persists over idle ticks until the next event tick
    ticks = sorted(end_state_bad)
    for i, t in enumerate(ticks):
        if end_state_bad[t]:
            stop = ticks[i + 1] if i + 1 < len(ticks) else horizon + 1
            bad_ticks.update(range(t, stop))
    if ticks and end_state_bad[ticks[-1]]:
        return horizon + 1
    return max(bad_ticks) + 1 if bad_ticks else 0
