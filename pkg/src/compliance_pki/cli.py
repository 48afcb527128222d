"""Command-line front end.

Exit codes: 0 success, 1 verification came out negative, 2 usage or I/O
error.  Results go to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional

from . import crypto
from .authority import Authority
from .canonical import canonical_bytes, parse_canonical
from .certificates import (
    Certificate,
    CertificateChain,
    Role,
    SubjectIdentity,
    TrustMode,
    deserialize_certificate,
    canonical_serialize,
    issue_certificate,
    self_sign,
    validate_chain,
)
from .crypto import KeyPair
from .device import BehaviorModel, DeviceAgent, DeviceKind, attempt_connection
from .errors import MalformedError, PKIError
from .trust_lists import (
    CertificateRevocationList,
    CertificateTrustList,
    TrustBundle,
    deserialize_list,
    serialize_list,
    verify_anchor_cert,
    verify_list,
)

log = logging.getLogger("compliance_pki")

EXIT_OK, EXIT_NEGATIVE, EXIT_ERROR = 0, 1, 2
FOREVER = 2**31 - 1


class UsageError(Exception):
    pass


def _seed_bytes(seed: Optional[str]) -> Optional[bytes]:
    if seed is None:
        return None
    if len(seed) == 64:
        try:
            return bytes.fromhex(seed)
        except ValueError:
            pass
    return crypto.seed_from_label("cli", seed)


def _read(path) -> bytes:
    return Path(path).read_bytes()


def _write(path, data: bytes) -> None:
    Path(path).write_bytes(data)


def _load_key(path) -> KeyPair:
    return KeyPair.from_document(parse_canonical(_read(path)))


def _load_cert(path) -> Certificate:
    return deserialize_certificate(_read(path))


def _emit(args, text: str, doc: Optional[dict] = None) -> None:
    if args.json and doc is not None:
        sys.stdout.write(canonical_bytes(doc).decode("utf-8") + "\n")
    else:
        sys.stdout.write(text + "\n")


def _keypair_from(args, key_flag: str = "key") -> KeyPair:
    key_path = getattr(args, key_flag, None)
    if key_path:
        return _load_key(key_path)
    return crypto.generate_keypair(_seed_bytes(args.seed))


# -- subcommands -----------------------------------------------------------


def cmd_keygen(args) -> int:
    pair = crypto.generate_keypair(_seed_bytes(args.seed))
    _write(args.out, canonical_bytes(pair.to_document()))
    _emit(args, pair.public_key.encode(), {"public_key": pair.public_key.encode()})
    return EXIT_OK


def cmd_anchor_init(args) -> int:
    pair = _keypair_from(args)
    auth = Authority.create(pair, TrustMode.parse(args.mode), args.now, args.not_after, args.not_before)
    auth.save(args.out)
    if args.anchor_out:
        _write(args.anchor_out, canonical_serialize(auth.anchor_cert))
    fp = auth.anchor_cert.fingerprint.hex()
    _emit(args, f"anchor {fp} mode {auth.mode.value}", {"anchor_fingerprint": fp, "mode": auth.mode.value})
    return EXIT_OK


def cmd_vendor_register(args) -> int:
    auth = Authority.load(args.state)
    if args.cert:
        cert = _load_cert(args.cert)
    elif args.vendor_key:
        pair = _load_key(args.vendor_key)
        not_before = args.now if args.not_before is None else args.not_before
        cert = self_sign(pair, SubjectIdentity(Role.VENDOR_ROOT, args.vendor_id), not_before, args.not_after)
    else:
        raise UsageError("vendor-register needs --cert or --vendor-key")
    auth.register_vendor(args.vendor_id, cert, args.now, actor=args.actor)
    auth.save(args.out)
    if args.cert_out:
        _write(args.cert_out, canonical_serialize(cert))
    _emit(args, f"registered {args.vendor_id} ctl_sequence={auth.ctl_sequence}",
          {"ctl_sequence": auth.ctl_sequence, "fingerprint": cert.fingerprint.hex(), "vendor_id": args.vendor_id})
    return EXIT_OK


def cmd_model_register(args) -> int:
    auth = Authority.load(args.state)
    cert = None
    if args.cert:
        cert = _load_cert(args.cert)
    elif args.vendor_key:
        if not (args.vendor_cert and args.model_key):
            raise UsageError("issuing a device-type certificate needs --vendor-cert and --model-key")
        root = _load_cert(args.vendor_cert)
        cert = issue_certificate(
            _load_key(args.vendor_key),
            root,
            SubjectIdentity(Role.DEVICE_TYPE, args.vendor_id, args.model_id),
            _load_key(args.model_key).public_key,
            (root.not_before, root.not_after),
        )
    auth.register_model(args.vendor_id, args.model_id, cert, args.now, actor=args.actor)
    auth.save(args.out)
    if args.cert_out and cert is not None:
        _write(args.cert_out, canonical_serialize(cert))
    fp = cert.fingerprint.hex() if cert else None
    _emit(args, f"registered {args.vendor_id}/{args.model_id} ctl_sequence={auth.ctl_sequence}",
          {"ctl_sequence": auth.ctl_sequence, "fingerprint": fp, "model_id": args.model_id, "vendor_id": args.vendor_id})
    return EXIT_OK


def _bundle_from_args(args) -> TrustBundle:
    if args.state:
        return Authority.load(args.state).publish_bundle()
    if args.ctl and args.crl and args.anchor:
        ctl, crl = deserialize_list(_read(args.ctl)), deserialize_list(_read(args.crl))
        if not isinstance(ctl, CertificateTrustList) or not isinstance(crl, CertificateRevocationList):
            raise MalformedError("--ctl/--crl point at the wrong list types")
        return TrustBundle(ctl, crl, _load_cert(args.anchor))
    raise UsageError("trust data needed: --state, or --ctl, --crl and --anchor")


def cmd_device_provision(args) -> int:
    issuer_key = _load_key(args.issuer_key)
    issuer = _load_cert(args.issuer_cert)
    if issuer.role is Role.DEVICE_TYPE:
        if not args.vendor_cert:
            raise UsageError("a device-type issuer needs --vendor-cert to complete the chain")
        parents = [issuer, _load_cert(args.vendor_cert)]
        model_id = issuer.subject.model_id
        if args.model_id and args.model_id != model_id:
            raise PKIError(f"unknown model {args.model_id!r} for issuer {issuer.subject.label()}")
    elif issuer.role is Role.VENDOR_ROOT:
        if not args.model_id:
            raise UsageError("--model-id is required when the vendor root issues devices")
        parents = [issuer]
        model_id = args.model_id
    else:
        raise PKIError(f"{issuer.role.value} certificates cannot provision devices")

    bundle = _bundle_from_args(args)
    if args.state:
        registered = Authority.load(args.state).vendors.get(issuer.subject.vendor_id)
        if registered is None or model_id not in registered.models:
            raise PKIError(f"unknown model {issuer.subject.vendor_id}/{model_id}")

    behavior = BehaviorModel.parse(args.behavior)
    keystore = crypto.generate_keypair(_seed_bytes(args.seed))
    chain = None
    if behavior.presents_certificate:
        not_before = issuer.not_before if args.not_before is None else args.not_before
        not_after = issuer.not_after if args.not_after is None else args.not_after
        leaf = issue_certificate(
            issuer_key,
            issuer,
            SubjectIdentity(Role.DEVICE, issuer.subject.vendor_id, model_id, args.serial),
            keystore.public_key,
            (not_before, not_after),
        )
        chain = CertificateChain([leaf, *parents])
    rng_seed = int.from_bytes(_seed_bytes(args.seed)[:8], "big") if args.seed is not None else None
    device = DeviceAgent(
        device_id=args.device_id or f"{issuer.subject.vendor_id}/{model_id}/{args.serial}",
        kind=DeviceKind(args.kind),
        keystore=keystore,
        chain=chain,
        bundle=bundle,
        behavior=behavior,
        rng_seed=rng_seed,
    )
    device.save(args.out)
    if args.chain_out and chain is not None:
        _write(args.chain_out, chain.serialize())
    leaf_fp = chain.leaf.fingerprint.hex() if chain else None
    _emit(args, f"provisioned {device.device_id} leaf {leaf_fp}", {"device_id": device.device_id, "leaf": leaf_fp})
    return EXIT_OK


def cmd_revoke(args) -> int:
    auth = Authority.load(args.state)
    target = auth.revoke(args.vendor_id, args.model_id, args.now, actor=args.actor, reason_code=args.reason_code)
    auth.save(args.out)
    fp = target.fingerprint.hex()
    _emit(args, f"revoked {target.subject.label()} {fp} crl_sequence={auth.crl_sequence}",
          {"crl_sequence": auth.crl_sequence, "fingerprint": fp, "subject": target.subject.to_document()})
    return EXIT_OK


def cmd_publish(args) -> int:
    auth = Authority.load(args.state)
    bundle = auth.publish_bundle()
    outputs = {args.ctl_out: serialize_list(bundle.ctl), args.crl_out: serialize_list(bundle.crl),
               args.anchor_out: canonical_serialize(bundle.anchor_cert), args.bundle_out: bundle.serialize()}
    for path, data in outputs.items():
        if path:
            _write(path, data)
    if args.audit_out:
        Path(args.audit_out).write_text(auth.export_audit_log(), encoding="utf-8")
    _emit(args, f"ctl_sequence={bundle.ctl.sequence} crl_sequence={bundle.crl.sequence}",
          {"crl_sequence": bundle.crl.sequence, "ctl_sequence": bundle.ctl.sequence})
    return EXIT_OK


def cmd_verify_cert(args) -> int:
    try:
        chain = CertificateChain.deserialize(_read(args.chain))
    except MalformedError:
        _emit(args, "Malformed", {"accepted": False, "reason": "Malformed"})
        return EXIT_NEGATIVE
    ctl, crl = deserialize_list(_read(args.ctl)), deserialize_list(_read(args.crl))
    if not isinstance(ctl, CertificateTrustList) or not isinstance(crl, CertificateRevocationList):
        raise MalformedError("--ctl/--crl point at the wrong list types")
    if args.anchor:
        anchor = _load_cert(args.anchor)
        if not (verify_anchor_cert(anchor) and verify_list(anchor.public_key, ctl) and verify_list(anchor.public_key, crl)):
            _emit(args, "BadSignature", {"accepted": False, "reason": "BadSignature", "scope": "trust-list"})
            return EXIT_NEGATIVE
    verdict = validate_chain(chain, ctl, crl, args.now)
    _emit(args, verdict.reason.value, {"accepted": verdict.accepted, "reason": verdict.reason.value})
    return EXIT_OK if verdict.accepted else EXIT_NEGATIVE


def cmd_verify_list(args) -> int:
    anchor = _load_cert(args.anchor) if args.anchor else Authority.load(args.state).anchor_cert
    try:
        lst = deserialize_list(_read(args.list))
    except MalformedError:
        _emit(args, "Malformed", {"ok": False, "reason": "Malformed"})
        return EXIT_NEGATIVE
    ok = verify_anchor_cert(anchor) and verify_list(anchor.public_key, lst)
    reason = "Ok" if ok else "BadSignature"
    _emit(args, reason, {"ok": ok, "reason": reason, "sequence": lst.sequence, "type": type(lst).__name__})
    return EXIT_OK if ok else EXIT_NEGATIVE


def cmd_handshake(args) -> int:
    a, b = DeviceAgent.load(args.a), DeviceAgent.load(args.b)
    rec = attempt_connection(a, b, args.now)
    if args.a_out:
        a.save(args.a_out)
    if args.b_out:
        b.save(args.b_out)
    lines = []
    for dev, verdict in ((a, rec.verdict_a), (b, rec.verdict_b)):
        state = "established" if verdict.established else "rejected"
        peer = verdict.peer_reported.reason.value if verdict.peer_reported else "-"
        lines.append(f"{dev.device_id}: {state} local={verdict.local_view.reason.value} peer={peer}")
    _emit(args, "\n".join(lines), rec.to_document())
    both = rec.verdict_a.established and rec.verdict_b.established
    return EXIT_OK if both else EXIT_NEGATIVE


def cmd_simulate(args) -> int:
    from .simulator import Scenario, render_report, run

    scenario = Scenario.load(args.scenario)
    if args.seed is not None:
        scenario.seed = int(args.seed)
    trace = run(scenario)
    if args.out:
        _write(args.out, trace.serialize())
    text, summary = render_report(trace)
    if args.report:
        Path(args.report).write_text(text, encoding="utf-8")
    if args.json:
        sys.stdout.write(summary.decode("utf-8") + "\n")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="compliance-pki", description="Compliance PKI for wireless devices")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        sp = sub.add_parser(name, parents=[common], help=help_text)
        sp.set_defaults(func=func)
        return sp

    sp = add("keygen", cmd_keygen, "generate a signing keypair")
    sp.add_argument("--seed", help="deterministic seed (64 hex chars or any label)")
    sp.add_argument("--out", required=True)

    sp = add("anchor-init", cmd_anchor_init, "create a trust authority state file")
    sp.add_argument("--mode", required=True, help="ManufacturerLevel|DeviceTypeLevel (or option1|option2)")
    sp.add_argument("--key", help="anchor keypair file")
    sp.add_argument("--seed")
    sp.add_argument("--now", type=int, default=0)
    sp.add_argument("--not-before", type=int)
    sp.add_argument("--not-after", type=int, default=FOREVER)
    sp.add_argument("--out", required=True)
    sp.add_argument("--anchor-out")

    sp = add("vendor-register", cmd_vendor_register, "register a vendor root")
    sp.add_argument("--state", required=True)
    sp.add_argument("--vendor-id", required=True)
    sp.add_argument("--cert", help="existing self-signed vendor root certificate")
    sp.add_argument("--vendor-key", help="self-sign a new vendor root with this key")
    sp.add_argument("--cert-out")
    sp.add_argument("--not-before", type=int)
    sp.add_argument("--not-after", type=int, default=FOREVER)
    sp.add_argument("--now", type=int, required=True)
    sp.add_argument("--actor", default="registrar")
    sp.add_argument("--out", required=True)

    sp = add("model-register", cmd_model_register, "register a device model")
    sp.add_argument("--state", required=True)
    sp.add_argument("--vendor-id", required=True)
    sp.add_argument("--model-id", required=True)
    sp.add_argument("--cert", help="existing device-type certificate")
    sp.add_argument("--vendor-key")
    sp.add_argument("--vendor-cert")
    sp.add_argument("--model-key")
    sp.add_argument("--cert-out")
    sp.add_argument("--now", type=int, required=True)
    sp.add_argument("--actor", default="registrar")
    sp.add_argument("--out", required=True)

    sp = add("device-provision", cmd_device_provision, "manufacture a device state file")
    sp.add_argument("--issuer-key", required=True)
    sp.add_argument("--issuer-cert", required=True)
    sp.add_argument("--vendor-cert")
    sp.add_argument("--model-id")
    sp.add_argument("--serial", required=True)
    sp.add_argument("--device-id")
    sp.add_argument("--kind", default=DeviceKind.STATION.value, choices=[k.value for k in DeviceKind])
    sp.add_argument("--behavior", default="Compliant")
    sp.add_argument("--seed")
    sp.add_argument("--not-before", type=int)
    sp.add_argument("--not-after", type=int)
    sp.add_argument("--state", help="authority state to take trust data from")
    sp.add_argument("--ctl")
    sp.add_argument("--crl")
    sp.add_argument("--anchor")
    sp.add_argument("--out", required=True)
    sp.add_argument("--chain-out")

    sp = add("revoke", cmd_revoke, "revoke a vendor or model")
    sp.add_argument("--state", required=True)
    sp.add_argument("--vendor-id", required=True)
    sp.add_argument("--model-id")
    sp.add_argument("--now", type=int, required=True)
    sp.add_argument("--actor", default="market-surveillance")
    sp.add_argument("--reason-code", type=int, default=1)
    sp.add_argument("--out", required=True)

    sp = add("publish", cmd_publish, "write the current CTL, CRL and anchor certificate")
    sp.add_argument("--state", required=True)
    sp.add_argument("--ctl-out")
    sp.add_argument("--crl-out")
    sp.add_argument("--anchor-out")
    sp.add_argument("--bundle-out")
    sp.add_argument("--audit-out", help="audit log as JSON lines")

    sp = add("verify-cert", cmd_verify_cert, "validate a certificate chain")
    sp.add_argument("--chain", required=True)
    sp.add_argument("--ctl", required=True)
    sp.add_argument("--crl", required=True)
    sp.add_argument("--anchor", help="verify the lists against this anchor first")
    sp.add_argument("--now", type=int, required=True)

    sp = add("verify-list", cmd_verify_list, "verify a CTL or CRL signature")
    sp.add_argument("--list", required=True)
    grp = sp.add_mutually_exclusive_group(required=True)
    grp.add_argument("--anchor")
    grp.add_argument("--state")

    sp = add("handshake", cmd_handshake, "run one mutual handshake between two devices")
    sp.add_argument("--a", required=True)
    sp.add_argument("--b", required=True)
    sp.add_argument("--now", type=int, required=True)
    sp.add_argument("--a-out")
    sp.add_argument("--b-out")

    sp = add("simulate", cmd_simulate, "replay a scenario file")
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--out", help="trace output file")
    sp.add_argument("--report", help="also write the text report here")
    sp.add_argument("--seed", help="override the scenario seed")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (PKIError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
