"""Deterministic discrete-event replay of compliance scenarios.

Events are dispatched in tick order; events sharing a tick run in file
order.  All key material and nonces derive from the scenario seed, so a
scenario file always yields the same trace bytes.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .authority import Authority
from .canonical import canonical_bytes, parse_canonical
from .certificates import TrustMode
from .crypto import generate_keypair, seed_from_label
from .device import BehaviorModel, DeviceAgent, DeviceKind, Variant, attempt_connection, provision, receive_update
from .errors import AuthorityError, MalformedError, ScenarioError
from .vendor import Vendor

log = logging.getLogger(__name__)

DEFAULT_VALIDITY_END = 2**31 - 1


class EventKind(str, enum.Enum):
    REGISTER_VENDOR = "RegisterVendor"
    REGISTER_MODEL = "RegisterModel"
    PROVISION_DEVICE = "ProvisionDevice"
    CONNECT = "Connect"
    REVOKE = "Revoke"
    DELIVER_UPDATE = "DeliverUpdate"
    DISCONNECT = "Disconnect"


# kind -> (required payload fields, optional payload fields)
_SCHEMA = {
    EventKind.REGISTER_VENDOR: ({"vendor_id"}, set()),
    EventKind.REGISTER_MODEL: ({"vendor_id", "model_id"}, set()),
    EventKind.PROVISION_DEVICE: ({"device_id", "vendor_id", "model_id"}, {"device_kind", "behavior", "serial"}),
    EventKind.CONNECT: ({"a", "b"}, set()),
    EventKind.REVOKE: ({"vendor_id"}, {"model_id", "reason_code"}),
    EventKind.DELIVER_UPDATE: ({"devices"}, set()),
    EventKind.DISCONNECT: ({"a", "b"}, set()),
}


@dataclass(frozen=True)
class Event:
    tick: int
    kind: EventKind
    payload: dict

    def to_document(self) -> dict:
        return {"kind": self.kind.value, "tick": self.tick, **self.payload}


@dataclass
class Scenario:
    seed: int
    mode: TrustMode
    events: list
    horizon: int
    validity_end: int = DEFAULT_VALIDITY_END

    @classmethod
    def from_document(cls, doc) -> "Scenario":
        if not isinstance(doc, dict):
            raise ScenarioError(None, "scenario must be a JSON object")
        try:
            seed = int(doc.get("seed", 0))
            mode = TrustMode.parse(doc.get("mode", TrustMode.DEVICE_TYPE_LEVEL.value))
        except (TypeError, ValueError, MalformedError) as exc:
            raise ScenarioError(None, str(exc)) from None
        raw_events = doc.get("events", [])
        if not isinstance(raw_events, list):
            raise ScenarioError(None, "events must be a list")
        events = []
        last_tick = 0
        for i, raw in enumerate(raw_events):
            if not isinstance(raw, dict):
                raise ScenarioError(i, "event must be an object")
            try:
                kind = EventKind(raw.get("kind"))
            except ValueError:
                raise ScenarioError(i, f"unknown event kind {raw.get('kind')!r}") from None
            tick = raw.get("tick")
            if type(tick) is not int or tick < 0:
                raise ScenarioError(i, "tick must be a non-negative integer")
            if tick < last_tick:
                raise ScenarioError(i, "event ticks must be non-decreasing")
            last_tick = tick
            payload = {k: v for k, v in raw.items() if k not in ("kind", "tick")}
            required, optional = _SCHEMA[kind]
            missing = required - set(payload)
            extra = set(payload) - required - optional
            if missing or extra:
                raise ScenarioError(i, f"{kind.value}: missing {sorted(missing)}, unexpected {sorted(extra)}")
            events.append(Event(tick, kind, payload))
        horizon = doc.get("horizon", last_tick)
        if type(horizon) is not int or horizon < last_tick:
            raise ScenarioError(None, "horizon must be an integer no earlier than the last event")
        validity_end = doc.get("validity_end", DEFAULT_VALIDITY_END)
        return cls(seed, mode, events, horizon, validity_end)

    def to_document(self) -> dict:
        return {
            "events": [e.to_document() for e in self.events],
            "horizon": self.horizon,
            "mode": self.mode.value,
            "seed": self.seed,
            "validity_end": self.validity_end,
        }

    @classmethod
    def load(cls, path) -> "Scenario":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ScenarioError(None, f"scenario is not valid JSON: {exc}") from None
        return cls.from_document(doc)


@dataclass
class ScenarioTrace:
    seed: int
    mode: str
    horizon: int
    records: list
    final_links: list
    metrics: dict

    def to_document(self) -> dict:
        return {
            "final_links": self.final_links,
            "horizon": self.horizon,
            "metrics": self.metrics,
            "mode": self.mode,
            "records": self.records,
            "seed": self.seed,
            "type": "ScenarioTrace",
        }

    def serialize(self) -> bytes:
        return canonical_bytes(self.to_document())

    @classmethod
    def from_document(cls, doc) -> "ScenarioTrace":
        if not isinstance(doc, dict) or doc.get("type") != "ScenarioTrace":
            raise MalformedError("not a scenario trace")
        return cls(doc["seed"], doc["mode"], doc["horizon"], doc["records"], doc["final_links"], doc["metrics"])

    @classmethod
    def deserialize(cls, data: bytes) -> "ScenarioTrace":
        return cls.from_document(parse_canonical(data))


def _rng_seed(seed: int, device_id: str) -> int:
    return int.from_bytes(hashlib.sha256(f"{seed}\x1frng\x1f{device_id}".encode()).digest()[:8], "big")


class Simulator:
    """Replays one scenario.  After ``run`` the final authority and devices stay inspectable."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.authority = Authority.create(
            generate_keypair(seed_from_label(scenario.seed, "anchor")),
            scenario.mode,
            now=0,
            not_after=scenario.validity_end,
        )
        self.vendors: dict[str, Vendor] = {}
        self.devices: dict[str, DeviceAgent] = {}
        self.records: list = []
        self._attempts: dict = {}

    # every record carries the authority's list sequences after the event
    def _record(self, index: int, event: Event, **fields) -> dict:
        rec = {
            "authority": {"crl_sequence": self.authority.crl_sequence, "ctl_sequence": self.authority.ctl_sequence},
            "index": index,
            "kind": event.kind.value,
            "tick": event.tick,
        }
        rec.update(fields)
        self.records.append(rec)
        return rec

    def _device(self, index: int, device_id) -> DeviceAgent:
        device = self.devices.get(device_id)
        if device is None:
            raise ScenarioError(index, f"unknown device {device_id!r}")
        return device

    def _key(self, *label) -> bytes:
        n = self._attempts.get(label, 0)
        self._attempts[label] = n + 1
        return seed_from_label(self.scenario.seed, *label, n)

    def run(self) -> ScenarioTrace:
        for index, event in enumerate(self.scenario.events):
            handler = getattr(self, "_on_" + event.kind.name.lower())
            handler(index, event)
        return ScenarioTrace(
            seed=self.scenario.seed,
            mode=self.scenario.mode.value,
            horizon=self.scenario.horizon,
            records=self.records,
            final_links=final_links(self.devices),
            metrics=compute_metrics(self.records, self.scenario.horizon),
        )

    def _on_register_vendor(self, index, event):
        vid = event.payload["vendor_id"]
        vendor = Vendor.create(vid, generate_keypair(self._key("vendor", vid)), 0, self.scenario.validity_end)
        try:
            self.authority.register_vendor(vid, vendor.root_cert, event.tick, actor="scenario")
        except AuthorityError as exc:
            self._record(index, event, ok=False, error=str(exc), vendor_id=vid)
            return
        self.vendors[vid] = vendor
        self._record(index, event, ok=True, vendor_id=vid, fingerprint=vendor.root_cert.fingerprint.hex())

    def _on_register_model(self, index, event):
        vid, mid = event.payload["vendor_id"], event.payload["model_id"]
        vendor = self.vendors.get(vid)
        if vendor is None:
            raise ScenarioError(index, f"unknown vendor {vid!r}")
        with_type = self.scenario.mode is TrustMode.DEVICE_TYPE_LEVEL
        previous = vendor.models.get(mid)
        cert = vendor.add_model(mid, generate_keypair(self._key("model", vid, mid)), with_type_cert=with_type)
        try:
            self.authority.register_model(vid, mid, cert, event.tick, actor="scenario")
        except AuthorityError as exc:
            if previous is None:
                del vendor.models[mid]
            else:
                vendor.models[mid] = previous
            self._record(index, event, ok=False, error=str(exc), vendor_id=vid, model_id=mid)
            return
        self._record(
            index, event, ok=True, vendor_id=vid, model_id=mid, fingerprint=cert.fingerprint.hex() if cert else None
        )

    def _on_provision_device(self, index, event):
        p = event.payload
        did = p["device_id"]
        if did in self.devices:
            raise ScenarioError(index, f"device {did!r} already exists")
        vendor = self.vendors.get(p["vendor_id"])
        registered = self.authority.vendors.get(p["vendor_id"])
        if vendor is None or registered is None or p["model_id"] not in registered.models:
            raise ScenarioError(index, f"unknown model {p['vendor_id']}/{p['model_id']}")
        try:
            behavior = BehaviorModel.parse(p.get("behavior", Variant.COMPLIANT.value))
            kind = DeviceKind(p.get("device_kind", DeviceKind.STATION.value))
        except (MalformedError, ValueError) as exc:
            raise ScenarioError(index, str(exc)) from None
        device = provision(
            vendor,
            p["model_id"],
            str(p.get("serial", did)),
            self._key("device", did),
            self.authority.publish_bundle(),
            device_id=did,
            kind=kind,
            behavior=behavior,
            rng_seed=_rng_seed(self.scenario.seed, did),
        )
        self.devices[did] = device
        self._record(
            index,
            event,
            device_id=did,
            vendor_id=p["vendor_id"],
            model_id=p["model_id"],
            behavior=behavior.variant.value,
            device_kind=kind.value,
            chain=[fp.hex() for fp in device.chain.fingerprints()] if device.chain is not None else [],
            ctl_sequence=device.bundle.ctl.sequence,
            crl_sequence=device.bundle.crl.sequence,
        )

    def _on_connect(self, index, event):
        a = self._device(index, event.payload["a"])
        b = self._device(index, event.payload["b"])
        if a is b:
            raise ScenarioError(index, "a device cannot connect to itself")
        before = _entries(a, b)
        rec = attempt_connection(a, b, event.tick)
        after = _entries(a, b)
        self._record(index, event, link_changes=_diff(before, after), **rec.to_document())

    def _on_revoke(self, index, event):
        p = event.payload
        try:
            target = self.authority.revoke(
                p["vendor_id"], p.get("model_id"), event.tick, actor="market-surveillance",
                reason_code=p.get("reason_code", 1),
            )
        except AuthorityError as exc:
            self._record(index, event, ok=False, error=str(exc), vendor_id=p["vendor_id"], model_id=p.get("model_id"))
            return
        self._record(
            index, event, ok=True, vendor_id=p["vendor_id"], model_id=p.get("model_id"),
            fingerprint=target.fingerprint.hex(),
        )

    def _on_deliver_update(self, index, event):
        targets = event.payload["devices"]
        if targets == "all":
            ids = list(self.devices)
        elif isinstance(targets, list):
            ids = [self._device(index, d).device_id for d in targets]
        else:
            raise ScenarioError(index, "devices must be 'all' or a list of device ids")
        bundle = self.authority.publish_bundle()
        outcomes = []
        changes = []
        for did in ids:
            device = self.devices[did]
            update = receive_update(device, bundle, event.tick)
            for peer_id, reason in update.torn_down:
                changes.append([did, peer_id, "down"])
                # the peer loses the link too once one side drops it
                if self.devices[peer_id].link_table.pop(did, None) is not None:
                    changes.append([peer_id, did, "down"])
            outcomes.append({
                "crl_sequence": device.bundle.crl.sequence,
                "crl_status": update.result.crl_status.value if update.result else "Ignored",
                "ctl_sequence": device.bundle.ctl.sequence,
                "ctl_status": update.result.ctl_status.value if update.result else "Ignored",
                "device_id": did,
                "torn_down": [[peer, reason.value] for peer, reason in update.torn_down],
            })
        self._record(index, event, deliveries=outcomes, link_changes=changes)

    def _on_disconnect(self, index, event):
        a = self._device(index, event.payload["a"])
        b = self._device(index, event.payload["b"])
        changes = []
        for x, y in ((a, b), (b, a)):
            if x.link_table.pop(y.device_id, None) is not None:
                changes.append([x.device_id, y.device_id, "down"])
        self._record(index, event, a=a.device_id, b=b.device_id, link_changes=changes)


def _entries(a: DeviceAgent, b: DeviceAgent) -> set:
    out = set()
    if b.device_id in a.link_table:
        out.add((a.device_id, b.device_id))
    if a.device_id in b.link_table:
        out.add((b.device_id, a.device_id))
    return out


def _diff(before: set, after: set) -> list:
    changes = [[o, p, "up"] for o, p in sorted(after - before)]
    changes += [[o, p, "down"] for o, p in sorted(before - after)]
    return changes


def final_links(devices: dict) -> list:
    """Directed link-table entries ``[owner, peer]``, sorted."""
    return sorted([owner, peer] for owner, dev in devices.items() for peer in dev.link_table)


def run(scenario: Scenario) -> ScenarioTrace:
    return Simulator(scenario).run()


# -- metrics ---------------------------------------------------------------


@dataclass
class _Replay:
    """Device facts and link state reconstructed from trace records."""

    devices: dict = field(default_factory=dict)  # id -> provisioning record
    revoked: set = field(default_factory=set)
    entries: set = field(default_factory=set)
    sequences: dict = field(default_factory=dict)  # id -> (ctl, crl)
    authority: tuple = (0, 0)

    def is_revoked(self, did: str) -> bool:
        return any(fp in self.revoked for fp in self.devices[did]["chain"])

    def is_compliant(self, did: str) -> bool:
        dev = self.devices[did]
        return dev["behavior"] == Variant.COMPLIANT.value and bool(dev["chain"]) and not self.is_revoked(did)

    def violating(self, owner: str, peer: str) -> bool:
        return self.is_compliant(owner) and self.is_revoked(peer)

    def any_violation(self) -> bool:
        return any(self.violating(o, p) for o, p in self.entries)

    def apply(self, rec: dict) -> bool:
        """Apply one record; True if it created a compliant->revoked link entry."""
        created = False
        kind = rec["kind"]
        if kind == EventKind.PROVISION_DEVICE.value:
            self.devices[rec["device_id"]] = rec
            self.sequences[rec["device_id"]] = (rec["ctl_sequence"], rec["crl_sequence"])
        elif kind == EventKind.REVOKE.value and rec.get("ok"):
            self.revoked.add(rec["fingerprint"])
        elif kind == EventKind.DELIVER_UPDATE.value:
            for d in rec["deliveries"]:
                self.sequences[d["device_id"]] = (d["ctl_sequence"], d["crl_sequence"])
        for owner, peer, direction in rec.get("link_changes", []):
            if direction == "up":
                self.entries.add((owner, peer))
                created = created or self.violating(owner, peer)
            else:
                self.entries.discard((owner, peer))
        auth = rec["authority"]
        self.authority = (auth["ctl_sequence"], auth["crl_sequence"])
        return created


def compute_metrics(records: list, horizon: int) -> dict:
    """Isolation and handshake metrics, derived from trace records alone.

    ``isolation_tick`` is the first tick from which, through the horizon, no
    compliant device holds a link to a device whose chain is revoked and no
    such link is created; ``horizon + 1`` means isolation was never reached.
    """
    replay = _Replay()
    accepted = rejected = 0
    bad_until = -1  # last tick known to be in violation
    violating_now = False
    last_tick = None

    for i, rec in enumerate(records):
        tick = rec["tick"]
        if violating_now and last_tick is not None and tick > last_tick:
            # state carried over the idle ticks in between
            bad_until = max(bad_until, tick - 1)
        if rec["kind"] == EventKind.CONNECT.value:
            for did, side in ((rec["a"], "verdict_a"), (rec["b"], "verdict_b")):
                if replay.is_compliant(did):
                    if rec[side]["established"]:
                        accepted += 1
                    else:
                        rejected += 1
        if replay.apply(rec):
            bad_until = max(bad_until, tick)
        end_of_tick = i + 1 == len(records) or records[i + 1]["tick"] != tick
        if end_of_tick:
            violating_now = replay.any_violation()
            if violating_now:
                bad_until = max(bad_until, tick)
            last_tick = tick

    if violating_now:
        isolation_tick = horizon + 1
    elif bad_until < 0:
        isolation_tick = 0
    else:
        isolation_tick = bad_until + 1

    latest_ctl, latest_crl = replay.authority
    stale = 0
    for did in replay.devices:
        ctl_seq, crl_seq = replay.sequences[did]
        if replay.is_compliant(did) and (ctl_seq < latest_ctl or crl_seq < latest_crl):
            stale += 1
    return {
        "accepted_count": accepted,
        "isolation_tick": isolation_tick,
        "rejected_count": rejected,
        "stale_device_count": stale,
    }


# -- reporting -------------------------------------------------------------


def device_status(records: list) -> dict:
    """Final per-device facts: status, vendor/model, behaviour, compliant peers."""
    replay = _Replay()
    for rec in records:
        replay.apply(rec)
    out = {}
    for did, dev in replay.devices.items():
        if not dev["chain"]:
            status = "uncertified"
        elif replay.is_revoked(did):
            status = "revoked"
        else:
            status = "valid"
        compliant_links = sorted(
            {p for o, p in replay.entries if o == did and replay.is_compliant(p)}
            | {o for o, p in replay.entries if p == did and replay.is_compliant(o)}
        )
        out[did] = {
            "behavior": dev["behavior"],
            "compliant": replay.is_compliant(did),
            "compliant_links": compliant_links,
            "links": sorted(p for o, p in replay.entries if o == did),
            "model_id": dev["model_id"],
            "status": status,
            "vendor_id": dev["vendor_id"],
        }
    return out


def isolated_devices(records: list) -> list:
    """Revoked or uncertified devices that no compliant device is linked with."""
    status = device_status(records)
    return sorted(d for d, s in status.items() if s["status"] != "valid" and not s["compliant_links"])


def render_report(trace: ScenarioTrace) -> tuple[str, bytes]:
    """Text table plus canonical JSON summary for a trace."""
    status = device_status(trace.records)
    isolated = isolated_devices(trace.records)
    m = trace.metrics
    lines = [
        f"scenario seed={trace.seed} mode={trace.mode} horizon={trace.horizon}",
        "",
        "metric               value",
        "-------------------- --------",
    ]
    for name in ("isolation_tick", "accepted_count", "rejected_count", "stale_device_count"):
        lines.append(f"{name:<20} {m[name]}")
    lines += ["", f"{'device':<16} {'vendor':<12} {'model':<12} {'behavior':<30} {'status':<12} links"]
    lines.append(f"{'-' * 16} {'-' * 12} {'-' * 12} {'-' * 30} {'-' * 12} -----")
    for did in sorted(status):
        s = status[did]
        lines.append(
            f"{did:<16} {s['vendor_id']:<12} {s['model_id']:<12} {s['behavior']:<30} {s['status']:<12} "
            f"{','.join(s['links']) or '-'}"
        )
    lines += ["", f"isolated devices ({len(isolated)}): {', '.join(isolated) or '-'}"]
    text = "\n".join(lines) + "\n"
    summary = canonical_bytes({
        "devices": status,
        "final_links": trace.final_links,
        "isolated_devices": isolated,
        "metrics": m,
        "type": "ScenarioReport",
    })
    return text, summary
