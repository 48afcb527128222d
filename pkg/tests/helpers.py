"""Deterministic universe builders shared by the test modules."""

from dataclasses import dataclass, field

from compliance_pki.authority import Authority
from compliance_pki.certificates import TrustMode
from compliance_pki.crypto import generate_keypair, seed_from_label
from compliance_pki.device import BehaviorModel, DeviceKind, provision
from compliance_pki.vendor import Vendor

END = 10_000


@dataclass
class Universe:
    mode: TrustMode
    authority: Authority
    vendors: dict = field(default_factory=dict)
    devices: dict = field(default_factory=dict)  # device_id -> DeviceAgent

    def bundle(self):
        return self.authority.publish_bundle()


def key(*label):
    return generate_keypair(seed_from_label(*label))


def build_universe(
    mode=TrustMode.DEVICE_TYPE_LEVEL,
    layout=None,
    tag="u",
    devices_per_model=1,
    behaviors=None,
    device_validity=None,
):
    """``layout`` maps vendor_id -> list of model ids."""
    layout = layout or {"vendorA": ["X", "Y"], "vendorB": ["X"]}
    auth = Authority.create(key(tag, "anchor"), mode, now=0, not_after=END)
    uni = Universe(mode, auth)
    with_type = mode is TrustMode.DEVICE_TYPE_LEVEL
    for vid, models in layout.items():
        vendor = Vendor.create(vid, key(tag, "vendor", vid), 0, END)
        auth.register_vendor(vid, vendor.root_cert, now=1)
        for mid in models:
            cert = vendor.add_model(mid, key(tag, "model", vid, mid), with_type_cert=with_type)
            auth.register_model(vid, mid, cert, now=1)
        uni.vendors[vid] = vendor
    behaviors = behaviors or {}
    for vid, models in layout.items():
        for mid in models:
            for n in range(devices_per_model):
                did = f"{vid}.{mid}.{n}"
                uni.devices[did] = provision(
                    uni.vendors[vid],
                    mid,
                    str(n),
                    seed_from_label(tag, "device", did),
                    auth.publish_bundle(),
                    device_id=did,
                    kind=DeviceKind.STATION,
                    behavior=behaviors.get(did, BehaviorModel()),
                    rng_seed=len(uni.devices) + 1,
                    validity=device_validity,
                )
    return uni


def golden_artifacts():
    """Byte-stable artifacts committed under tests/golden (filename -> bytes)."""
    from compliance_pki.certificates import canonical_serialize
    from compliance_pki.trust_lists import serialize_list

    uni = build_universe(TrustMode.DEVICE_TYPE_LEVEL, layout={"vendorA": ["X", "Y"]}, tag="golden")
    uni.authority.revoke("vendorA", "Y", now=5)
    bundle = uni.bundle()
    device = uni.devices["vendorA.X.0"]
    return {
        "anchor.cert.json": canonical_serialize(bundle.anchor_cert),
        "vendorA.cert.json": canonical_serialize(uni.vendors["vendorA"].root_cert),
        "vendorA-X.cert.json": canonical_serialize(uni.vendors["vendorA"].models["X"].cert),
        "device.cert.json": canonical_serialize(device.chain.leaf),
        "device.chain.json": device.chain.serialize(),
        "trust.ctl.json": serialize_list(bundle.ctl),
        "revoked.crl.json": serialize_list(bundle.crl),
        "bundle.json": bundle.serialize(),
        "authority.json": uni.authority.serialize(),
    }


if __name__ == "__main__":
    from pathlib import Path

    out = Path(__file__).parent / "golden"
    out.mkdir(exist_ok=True)
    for name, data in golden_artifacts().items():
        (out / name).write_bytes(data)
        print("wrote", out / name)
