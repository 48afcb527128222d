"""Random scenario generation for property tests and demos."""

from __future__ import annotations

import random
from typing import Optional

from .certificates import TrustMode

_NONCOMPLIANT = ["NoCertificate", "SkipsValidation", "StaleTrustData", "RevokedModelStillTransmitting"]


def random_scenario(
    seed: int,
    mode: TrustMode = TrustMode.DEVICE_TYPE_LEVEL,
    max_vendors: int = 10,
    max_models: int = 5,
    max_devices: int = 40,
    max_events: int = 200,
    final_delivery: bool = True,
    revocations: Optional[int] = None,
) -> dict:
    """Build a scenario document.

    With ``final_delivery`` every device receives the latest bundle after the
    last revocation, and a few more connection attempts follow it.
    """
    rng = random.Random(seed)
    events = []
    tick = 0

    def add(kind, **payload):
        events.append({"kind": kind, "tick": tick, **payload})

    vendors = [f"v{i}" for i in range(rng.randint(1, max_vendors))]
    models = []
    for vid in vendors:
        add("RegisterVendor", vendor_id=vid)
        for j in range(rng.randint(1, max_models)):
            add("RegisterModel", vendor_id=vid, model_id=f"m{j}")
            models.append((vid, f"m{j}"))

    tick = 1
    devices = []
    for k in range(rng.randint(2, max_devices)):
        vid, mid = rng.choice(models)
        behavior = "Compliant" if rng.random() < 0.75 else rng.choice(_NONCOMPLIANT)
        kind = "AccessPoint" if rng.random() < 0.25 else "Station"
        did = f"d{k}"
        add("ProvisionDevice", device_id=did, vendor_id=vid, model_id=mid, behavior=behavior, device_kind=kind)
        devices.append(did)

    budget = max_events - len(events) - (12 if final_delivery else 0)
    n_revocations = revocations if revocations is not None else rng.randint(0, 3)
    revoke_slots = set(rng.sample(range(max(budget, 1)), min(n_revocations, max(budget, 1))))
    revoked_targets = set()
    for step in range(max(budget, 0)):
        if rng.random() < 0.3:
            tick += 1
        if step in revoke_slots:
            vid, mid = rng.choice(models)
            target = (vid, None) if rng.random() < 0.2 else (vid, mid)
            if target not in revoked_targets:
                revoked_targets.add(target)
                payload = {"vendor_id": vid}
                if target[1] is not None:
                    payload["model_id"] = target[1]
                add("Revoke", **payload)
                continue
        roll = rng.random()
        if roll < 0.7:
            a, b = rng.sample(devices, 2)
            add("Connect", a=a, b=b)
        elif roll < 0.85:
            subset = sorted(rng.sample(devices, rng.randint(1, len(devices))), key=devices.index)
            add("DeliverUpdate", devices=subset)
        else:
            a, b = rng.sample(devices, 2)
            add("Disconnect", a=a, b=b)

    if final_delivery:
        tick += 1
        add("DeliverUpdate", devices="all")
        for _ in range(10):
            if rng.random() < 0.5:
                tick += 1
            a, b = rng.sample(devices, 2)
            add("Connect", a=a, b=b)

    return {"events": events, "horizon": tick + 2, "mode": TrustMode(mode).value, "seed": seed}
