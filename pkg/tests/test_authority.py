import pytest

from compliance_pki.authority import Authority
from compliance_pki.certificates import Reason, Role, SubjectIdentity, TrustMode, issue_certificate, validate_chain
from compliance_pki.errors import AuthorityError
from compliance_pki.trust_lists import verify_list
from compliance_pki.vendor import Vendor

from helpers import END, build_universe, key


def fresh(mode=TrustMode.DEVICE_TYPE_LEVEL, tag="auth"):
    return Authority.create(key(tag, "anchor"), mode, now=0, not_after=END)


def vendor(vid, tag="auth"):
    return Vendor.create(vid, key(tag, "vendor", vid), 0, END)


def expected_ctl(vendors: dict, mode):
    """Independent registry->CTL derivation: the fingerprints the CTL must hold."""
    if mode is TrustMode.MANUFACTURER_LEVEL:
        return {v.root_cert.fingerprint for v in vendors.values()}
    return {m.cert.fingerprint for v in vendors.values() for m in v.models.values() if m.cert}


def test_fresh_authority_has_empty_lists_at_sequence_zero():
    auth = fresh()
    bundle = auth.publish_bundle()
    assert (bundle.ctl.sequence, len(bundle.ctl.entries)) == (0, 0)
    assert (bundle.crl.sequence, len(bundle.crl.revoked)) == (0, 0)
    assert verify_list(auth.anchor_cert.public_key, bundle.ctl)
    assert verify_list(auth.anchor_cert.public_key, bundle.crl)


def test_register_vendor_option1_publishes_ctl():
    auth = fresh(TrustMode.MANUFACTURER_LEVEL)
    v = vendor("vendorA")
    auth.register_vendor("vendorA", v.root_cert, now=1)
    assert auth.ctl_sequence == 1
    assert auth.ctl.fingerprints() == {v.root_cert.fingerprint}


def test_register_vendor_option2_leaves_ctl():
    auth = fresh()
    auth.register_vendor("vendorA", vendor("vendorA").root_cert, now=1)
    assert auth.ctl_sequence == 0 and not auth.ctl.entries
    assert "vendorA" in auth.vendors


def test_duplicate_vendor_rejected_and_state_unchanged():
    auth = fresh()
    auth.register_vendor("vendorA", vendor("vendorA").root_cert, now=1)
    before = auth.serialize()
    with pytest.raises(AuthorityError):
        auth.register_vendor("vendorA", vendor("vendorA", tag="other").root_cert, now=2)
    assert auth.serialize() == before


def test_vendor_root_must_be_self_signed_and_match():
    auth = fresh()
    with pytest.raises(AuthorityError):
        auth.register_vendor("vendorB", vendor("vendorA").root_cert, now=1)
    anchor_issued = issue_certificate(
        auth.anchor_keypair, auth.anchor_cert, SubjectIdentity(Role.VENDOR_ROOT, "vendorC"), key("c").public_key, (0, 10)
    )
    with pytest.raises(AuthorityError, match="self-signed"):
        auth.register_vendor("vendorC", anchor_issued, now=1)


def test_register_model_grows_ctl():
    auth = fresh()
    v = vendor("vendorA")
    auth.register_vendor("vendorA", v.root_cert, now=1)
    cert = v.add_model("X", key("m", "X"))
    auth.register_model("vendorA", "X", cert, now=2)
    assert auth.ctl_sequence == 1
    assert auth.ctl.fingerprints() == {cert.fingerprint}


def test_model_from_other_vendor_root_is_chain_mismatch():
    auth = fresh()
    a, b = vendor("vendorA"), vendor("vendorB")
    auth.register_vendor("vendorA", a.root_cert, now=1)
    auth.register_vendor("vendorB", b.root_cert, now=1)
    # vendorB's root signs a certificate claiming to be vendorA's model
    from compliance_pki.certificates import _sign_certificate

    forged = _sign_certificate(
        b.keypair, SubjectIdentity(Role.DEVICE_TYPE, "vendorA", "X"), key("fx").public_key, 0, 10, b.root_cert.fingerprint
    )
    with pytest.raises(AuthorityError, match="chain mismatch"):
        auth.register_model("vendorA", "X", forged, now=2)


def test_duplicate_model_rejected():
    uni = build_universe(tag="dup")
    with pytest.raises(AuthorityError, match="already registered"):
        uni.authority.register_model("vendorA", "X", uni.vendors["vendorA"].models["X"].cert, now=2)


def test_revoked_model_identifier_cannot_be_reused():
    uni = build_universe(tag="reuse")
    uni.authority.revoke("vendorA", "X", now=3)
    fresh_cert = uni.vendors["vendorA"].add_model("X", key("reuse", "new-X"))
    before = uni.authority.serialize()
    with pytest.raises(AuthorityError, match="cannot be reused"):
        uni.authority.register_model("vendorA", "X", fresh_cert, now=4)
    assert uni.authority.serialize() == before


def test_revoked_key_cannot_be_registered_under_new_model_id():
    uni = build_universe(tag="rekey")
    uni.authority.revoke("vendorA", "X", now=3)
    v = uni.vendors["vendorA"]
    old_key = key("rekey", "model", "vendorA", "X")
    renamed = issue_certificate(v.keypair, v.root_cert, SubjectIdentity(Role.DEVICE_TYPE, "vendorA", "X2"),
                                old_key.public_key, (0, END))
    with pytest.raises(AuthorityError, match="previously revoked"):
        uni.authority.register_model("vendorA", "X2", renamed, now=4)


def test_option2_model_revocation_spares_siblings():
    uni = build_universe(layout={"vendorA": ["X"], "vendorB": ["X", "Y"]}, tag="scope")
    target = uni.authority.revoke("vendorB", "X", now=3)
    b = uni.bundle()
    assert target.fingerprint in b.crl.fingerprints()
    assert target == uni.vendors["vendorB"].models["X"].cert
    verdicts = {d: validate_chain(dev.chain, b.ctl, b.crl, 5).reason for d, dev in uni.devices.items()}
    assert verdicts == {"vendorA.X.0": Reason.OK, "vendorB.X.0": Reason.REVOKED, "vendorB.Y.0": Reason.OK}


def test_option1_vendor_revocation_covers_all_models():
    uni = build_universe(TrustMode.MANUFACTURER_LEVEL, layout={"vendorA": ["X"], "vendorB": ["X", "Y"]}, tag="o1s")
    uni.authority.revoke("vendorB", now=3)
    b = uni.bundle()
    verdicts = {d: validate_chain(dev.chain, b.ctl, b.crl, 5).reason for d, dev in uni.devices.items()}
    assert verdicts == {"vendorA.X.0": Reason.OK, "vendorB.X.0": Reason.REVOKED, "vendorB.Y.0": Reason.REVOKED}


def test_option1_model_target_escalates_to_vendor_root():
    uni = build_universe(TrustMode.MANUFACTURER_LEVEL, layout={"vendorB": ["X", "Y"]}, tag="esc")
    target = uni.authority.revoke("vendorB", "X", now=3)
    assert target.role is Role.VENDOR_ROOT
    assert uni.authority.vendors["vendorB"].revoked


def test_revoke_errors():
    uni = build_universe(tag="rev-err")
    with pytest.raises(AuthorityError):
        uni.authority.revoke("vendorA", "nope", now=3)
    with pytest.raises(AuthorityError):
        uni.authority.revoke("nobody", now=3)
    uni.authority.revoke("vendorA", "X", now=3)
    with pytest.raises(AuthorityError, match="already revoked"):
        uni.authority.revoke("vendorA", "X", now=4)


def test_clock_may_not_run_backwards():
    uni = build_universe(tag="clock")
    uni.authority.revoke("vendorA", "X", now=5)
    with pytest.raises(AuthorityError):
        uni.authority.revoke("vendorA", "Y", now=4)


@pytest.mark.parametrize("mode", list(TrustMode))
def test_registry_and_ctl_stay_consistent(mode):
    auth = fresh(mode, tag=f"cons-{mode.value}")
    vendors = {}
    with_type = mode is TrustMode.DEVICE_TYPE_LEVEL

    def check():
        assert auth.ctl.fingerprints() == expected_ctl(vendors, mode)
        assert verify_list(auth.anchor_cert.public_key, auth.ctl)

    check()
    for i, vid in enumerate(["v0", "v1", "v2"]):
        vendors[vid] = vendor(vid, tag="cons")
        auth.register_vendor(vid, vendors[vid].root_cert, now=i + 1)
        check()
        for mid in ["a", "b"]:
            cert = vendors[vid].add_model(mid, key("cons", vid, mid), with_type_cert=with_type)
            auth.register_model(vid, mid, cert, now=i + 1)
            check()
    auth.revoke("v1", "a", now=10)
    check()


def test_bundle_matches_registry_after_registrations_and_revocation():
    auth = fresh(tag="bundle")
    v = vendor("vendorA", tag="bundle")
    auth.register_vendor("vendorA", v.root_cert, now=1)
    x = v.add_model("X", key("bundle", "X"))
    y = v.add_model("Y", key("bundle", "Y"))
    auth.register_model("vendorA", "X", x, now=2)
    auth.register_model("vendorA", "Y", y, now=2)
    auth.revoke("vendorA", "Y", now=3)
    bundle = auth.publish_bundle()
    assert bundle.ctl.fingerprints() == expected_ctl({"vendorA": v}, TrustMode.DEVICE_TYPE_LEVEL)
    assert bundle.crl.fingerprints() == {y.fingerprint}
    assert verify_list(auth.anchor_cert.public_key, bundle.ctl)
    assert verify_list(auth.anchor_cert.public_key, bundle.crl)
    assert bundle.serialize() == auth.publish_bundle().serialize()


def test_crl_never_drops_entries():
    uni = build_universe(layout={f"v{i}": ["a", "b"] for i in range(3)}, tag="grow")
    published = [uni.authority.crl]
    for t, (vid, mid) in enumerate([("v0", "a"), ("v2", "b"), ("v1", None), ("v0", "b")]):
        uni.authority.revoke(vid, mid, now=10 + t)
        published.append(uni.authority.crl)
    for earlier, later in zip(published, published[1:]):
        assert earlier.sequence < later.sequence
        assert earlier.fingerprints() <= later.fingerprints()


def test_audit_log_is_complete_and_monotone():
    uni = build_universe(tag="audit")
    uni.authority.revoke("vendorA", "X", now=4)
    log = uni.authority.audit_log
    stamps = [e.timestamp for e in log]
    assert stamps == sorted(stamps)
    assert [e.index for e in log] == list(range(len(log)))
    ctl_pubs = [e.details["sequence"] for e in log if e.action == "publish_ctl"]
    crl_pubs = [e.details["sequence"] for e in log if e.action == "publish_crl"]
    assert ctl_pubs == list(range(uni.authority.ctl_sequence + 1))
    assert crl_pubs == list(range(uni.authority.crl_sequence + 1))
    revokes = [e for e in log if e.action == "revoke"]
    assert len(revokes) == 1 and revokes[0].actor == "market-surveillance" and revokes[0].timestamp == 4
    lines = uni.authority.export_audit_log().splitlines()
    assert len(lines) == len(log)


def test_state_persists_byte_identically(tmp_path):
    uni = build_universe(tag="persist")
    uni.authority.revoke("vendorB", "X", now=3)
    path = tmp_path / "a.authority.json"
    uni.authority.save(path)
    loaded = Authority.load(path)
    assert loaded.serialize() == path.read_bytes()
    assert loaded.publish_bundle() == uni.authority.publish_bundle()
    with pytest.raises(AuthorityError):
        loaded.revoke("vendorB", "X", now=4)
