"""Phone-side coordinator: record, persist, authenticate, upload, verify."""
from __future__ import annotations

import itertools
import json
import logging
import random
import time
import uuid
from dataclasses import asdict, dataclass, field
from typing import Callable

import yaml

from ..backend.validation import RECORD_FIELDS, RECORD_TYPES
from ..ema import EmaScheduler, EventKind, SurveyInstance
from ..ema.scheduler import EventRecord, SURVEY_EXPIRY_S
from ..wristband.protocol import BandNotification, NotificationKind
from .crypto import GpsCipher
from .outbox import Outbox
from .records import DataRecord, RecordError, normalized
from .transport import ConnectionRefused, ConnectionReset, RequestTimeout, TransportError

log = logging.getLogger(__name__)

ACK_OK = ("stored", "duplicate", "updated")


@dataclass
class AgentConfig:
    """Agent settings; one YAML file per enrolled phone.

    participant_id, phone_id   identity stamped on every record
    aes_key_hex, key_id        64 hex chars of AES-256 key material and its label
    backend_url                base URL of the ingestion service
    utc_offset_s               participant's local time offset
    batch_size                 records per upload request
    backoff_*                  retry schedule after a failed upload round
    request_timeout_s          bound on each network call
    drain_pct_per_hour         phone battery drain while collecting
    trigger                    MVPA trigger overrides forwarded to the bands
    ema_seed, survey_expiry_s  random survey plan seed, survey lifetime
    """
    participant_id: str
    phone_id: str
    aes_key_hex: str
    key_id: str = "k1"
    backend_url: str = "http://127.0.0.1:8080"
    utc_offset_s: float = 0.0
    batch_size: int = 500
    backoff_initial_s: float = 1.0
    backoff_factor: float = 2.0
    backoff_cap_s: float = 300.0
    request_timeout_s: float = 30.0
    drain_pct_per_hour: float = 3.0
    trigger: dict = field(default_factory=dict)
    ema_seed: int = 0
    survey_expiry_s: float = SURVEY_EXPIRY_S

    def __post_init__(self):
        if not self.participant_id or not self.phone_id:
            raise ValueError("participant_id and phone_id are required")
        if len(bytes.fromhex(self.aes_key_hex)) != 32:
            raise ValueError("aes_key_hex must encode 32 bytes")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")

    @classmethod
    def load(cls, path) -> "AgentConfig":
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh) or {}
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown agent config fields: {sorted(unknown)}")
        return cls(**doc)

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            yaml.safe_dump(asdict(self), fh, sort_keys=True)


class Backoff:
    """Capped exponential backoff with jitter in [delay/2, delay]."""

    def __init__(self, initial_s: float, factor: float, cap_s: float, rng: random.Random):
        self.initial_s, self.factor, self.cap_s = initial_s, factor, cap_s
        self.rng = rng
        self.failures = 0
        self.next_t = float("-inf")

    def ready(self, now: float) -> bool:
        return now >= self.next_t

    def fail(self, now: float) -> float:
        self.failures += 1
        delay = min(self.cap_s, self.initial_s * self.factor ** (self.failures - 1))
        delay *= 0.5 + 0.5 * self.rng.random()
        self.next_t = now + delay
        return delay

    def reset(self) -> None:
        self.failures = 0
        self.next_t = float("-inf")


@dataclass
class ConsistencyReport:
    missing_on_server: list[str] = field(default_factory=list)
    missing_locally: list[str] = field(default_factory=list)
    mismatched: list[str] = field(default_factory=list)
    dead_lettered: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.missing_on_server or self.missing_locally or self.mismatched)

    def to_dict(self) -> dict:
        return asdict(self)


def _same_record(a: dict, b: dict, cipher) -> bool:
    # identical envelopes (ciphertext included) need no decryption
    if all(a.get(k) == b.get(k) for k in RECORD_FIELDS):
        return True
    return normalized(a, cipher) == normalized(b, cipher)


def compare_records(local_docs, server_docs, cipher: GpsCipher | None = None,
                    exclude=()) -> ConsistencyReport:
    """Match by record_id, then by content (GPS compared after decryption)."""
    exclude = set(exclude)
    local = {d["record_id"]: d for d in local_docs if d["record_id"] not in exclude}
    server = {d["record_id"]: d for d in server_docs}
    both = local.keys() & server.keys()
    return ConsistencyReport(
        missing_on_server=sorted(local.keys() - server.keys()),
        missing_locally=sorted(server.keys() - local.keys() - exclude),
        mismatched=sorted(r for r in both if not _same_record(local[r], server[r], cipher)),
        dead_lettered=sorted(exclude),
    )


class PhoneAgent:
    """Store-and-forward client for one phone.

    Everything is recorded to the outbox first. :meth:`upload_pending` is
    safe to call at any time: it is a no-op while the backoff timer runs or
    the network is down, and marks records uploaded only on a server ack
    naming their record_id.
    """

    def __init__(self, config: AgentConfig, outbox_dir, transport=None, clock: Callable[[], float] | None = None,
                 rng: random.Random | None = None, iv_source: Callable[[int], bytes] | None = None,
                 id_source: Callable[[], str] | None = None, survey=None):
        self.config = c = config
        self.clock = clock or time.time
        self.transport = transport
        self.rng = rng or random.Random()
        self._id_source = id_source
        self.outbox = Outbox(outbox_dir, c.utc_offset_s)
        self.cipher = GpsCipher.from_hex(c.aes_key_hex, c.key_id, iv_source)
        doc = self.outbox.read_token()
        self.token: dict | None = doc if doc and doc.get("device_id") == c.phone_id else None
        self.backoff = Backoff(c.backoff_initial_s, c.backoff_factor, c.backoff_cap_s, self.rng)
        self.ema = EmaScheduler(c.participant_id, c.phone_id, utc_offset_s=c.utc_offset_s, seed=c.ema_seed,
                                expiry_s=c.survey_expiry_s, survey=survey, id_factory=self.new_id,
                                on_event=self._on_event, on_resolved=self._on_survey)
        self.bands: dict[str, str] = {}
        self.band_battery: dict[str, float] = {}
        self.band_storage: dict[str, float] = {}
        self.band_charging: dict[str, bool] = {}
        self._enmo: dict[float, dict[str, object]] = {}
        self.phone_pct = 100.0
        self.stats = {"signups": 0, "reauths": 0, "requests": 0, "acked": 0, "dead_lettered": 0,
                      "refused": 0, "timeouts": 0, "resets": 0, "http_errors": 0}

    def new_id(self) -> str:
        return self._id_source() if self._id_source else str(uuid.uuid4())

    def close(self) -> None:
        self.outbox.close()

    # -- recording -------------------------------------------------------------

    def record(self, record_type: str, payload: dict, t: float | None = None) -> DataRecord:
        """Validate and persist one record. GPS payloads ``{"lat", "lon"}`` are encrypted first."""
        if record_type == "gps" and "lat" in payload:
            payload = self.cipher.encrypt(payload["lat"], payload["lon"])
        ts = self.clock() if t is None else t
        rec = DataRecord.build(self.new_id(), record_type, self.config.participant_id, self.config.phone_id,
                               ts, payload)
        self.outbox.append(rec)
        return rec

    def record_gps(self, lat: float, lon: float, t: float | None = None) -> DataRecord:
        return self.record("gps", {"lat": lat, "lon": lon}, t)

    def record_battery(self, t: float | None = None) -> DataRecord:
        bands = [{"band_mac": m, "pct": round(p, 6)} for m, p in sorted(self.band_battery.items())]
        return self.record("battery", {"phone_pct": round(self.phone_pct, 6), "bands": bands}, t)

    def log_event(self, kind: EventKind, t: float, band_mac: str | None = None, **detail) -> EventRecord:
        return self.ema.log_event(kind, t, band_mac, **detail)

    def _on_event(self, ev: EventRecord) -> None:
        self.record("event", ev.payload(), ev.timestamp)

    def _on_survey(self, inst: SurveyInstance) -> None:
        self.record("survey", {"survey_id": inst.id, "kind": inst.kind.value, "status": inst.status.value,
                               "triggered_t": inst.triggered_t, "resolved_t": inst.resolved_t,
                               "responses": inst.responses}, inst.resolved_t)

    def drain_battery(self, elapsed_s: float) -> None:
        self.phone_pct = max(0.0, self.phone_pct - self.config.drain_pct_per_hour * elapsed_s / 3600.0)

    def charge_phone(self, level: float = 100.0) -> None:
        self.phone_pct = float(level)

    # -- bands -------------------------------------------------------------------

    def connect_band(self, mac: str, side: str, t: float) -> None:
        self.bands[mac] = side
        self.log_event(EventKind.BAND_CONNECTED, t, mac, side=side)

    def disconnect_band(self, mac: str, t: float) -> None:
        self.bands.pop(mac, None)
        self.log_event(EventKind.BAND_DISCONNECTED, t, mac)

    def handle_notifications(self, mac: str, notes: list[BandNotification]) -> None:
        for n in notes:
            if n.kind == NotificationKind.ENMO_SUMMARY:
                self._enmo_value(mac, n)
            elif n.kind == NotificationKind.MVPA_EPOCH:
                if n.value:
                    self.ema.on_mvpa_notification(n.t, band_mac=mac)
            elif n.kind == NotificationKind.BATTERY_LEVEL:
                self.band_battery[mac] = float(n.value)
                self.log_event(EventKind.BATTERY_BELOW_20, n.t, mac, pct=round(float(n.value), 6))
            elif n.kind == NotificationKind.STORAGE_LEVEL:
                self.band_storage[mac] = float(n.value)
            elif n.kind == NotificationKind.CHARGING_STATUS:
                self.band_charging[mac] = bool(n.value)

    def _enmo_value(self, mac: str, n: BandNotification) -> None:
        v = n.value
        slot = self._enmo.setdefault(v.bout_start, {"end": n.t, "bands": {}})
        slot["bands"][mac] = {"band_mac": mac, "side": self.bands.get(mac, "left"),
                              "mean_enmo": float(v.mean_enmo), "is_mvpa": bool(v.is_mvpa),
                              "sample_count": int(v.sample_count), "dropout": bool(v.dropout)}
        if set(slot["bands"]) >= set(self.bands):
            self._emit_enmo(v.bout_start)

    def _emit_enmo(self, bout_start: float) -> None:
        slot = self._enmo.pop(bout_start)
        bands = [slot["bands"][m] for m in sorted(slot["bands"])]
        self.record("enmo", {"bout_start": bout_start, "duration": slot["end"] - bout_start, "bands": bands},
                    slot["end"])

    def flush_enmo(self) -> None:
        for start in sorted(self._enmo):
            self._emit_enmo(start)

    # -- network -----------------------------------------------------------------

    def _send(self, method: str, path: str, body: dict | bytes | None = None, auth: bool = True):
        headers = {"Content-Type": "application/json"}
        if auth and self.token:
            headers["Authorization"] = f"Bearer {self.token['token']}"
        if isinstance(body, bytes):
            raw = body
        else:
            raw = json.dumps(body, separators=(",", ":")).encode("utf-8") if body is not None else b""
        self.stats["requests"] += 1
        try:
            return self.transport.request(method, path, headers, raw)
        except ConnectionRefused:
            self.stats["refused"] += 1
            raise
        except RequestTimeout:
            self.stats["timeouts"] += 1
            raise
        except ConnectionReset:
            self.stats["resets"] += 1
            raise

    def _signup(self) -> bool:
        try:
            resp = self._send("POST", "/signup", {"device_id": self.config.phone_id,
                                                  "username": self.config.participant_id}, auth=False)
        except TransportError:
            return False
        if resp.status != 200:
            self.stats["http_errors"] += 1
            log.warning("signup rejected with HTTP %d", resp.status)
            return False
        self.stats["signups"] += 1
        self.token = json.loads(resp.body)
        self.outbox.write_token(self.token)
        return True

    def authenticate(self) -> dict | None:
        """Reuse the stored token until it expires, else sign up. ``None`` while offline."""
        if self.transport is None:
            return None
        if self.token and self.token["expires_t"] > self.clock():
            return self.token
        return self.token if self._signup() else None

    def upload_pending(self) -> int:
        """One upload round. Returns the number of records acknowledged."""
        now = self.clock()
        if self.transport is None or not self.backoff.ready(now):
            return 0
        if self.authenticate() is None:
            self.backoff.fail(now)
            return 0
        acked = 0
        reauthed = False
        for rtype in RECORD_TYPES:
            queue = self.outbox.pending[rtype]
            while queue:
                batch = list(itertools.islice(queue.values(), self.config.batch_size))
                try:
                    resp = self._send("POST", f"/data/{rtype}", _batch_body(batch))
                except TransportError:
                    self.backoff.fail(now)
                    return acked
                if resp.status == 401:
                    if reauthed or not self._signup():
                        self.backoff.fail(now)
                        return acked
                    reauthed = True
                    self.stats["reauths"] += 1
                    continue
                if resp.status == 400:
                    self.stats["http_errors"] += 1
                    reason = _error_text(resp.body)
                    for r in batch:
                        self._quarantine(r, f"batch rejected: {reason}")
                    continue
                if resp.status != 200:
                    self.stats["http_errors"] += 1
                    self.backoff.fail(now)
                    return acked
                n = self._apply_acks(batch, resp.body)
                if n == 0:
                    self.backoff.fail(now)
                    return acked
                acked += n
        self.backoff.reset()
        return acked

    def _apply_acks(self, batch: list[DataRecord], body: bytes) -> int:
        """Mark acked records; quarantine rejected ones. Returns records resolved."""
        try:
            acks = json.loads(body)["acks"]
        except (ValueError, KeyError, TypeError):
            return 0
        by_id = {r.record_id: r for r in batch}
        ok, resolved = [], 0
        for a in acks:
            rec = by_id.pop(a.get("record_id"), None) if isinstance(a, dict) else None
            if rec is None:
                continue
            if a.get("status") in ACK_OK:
                ok.append(rec.record_id)
            else:
                self._quarantine(rec, a.get("reason") or str(a.get("status")))
            resolved += 1
        self.outbox.mark_uploaded(ok)
        self.stats["acked"] += len(ok)
        return resolved

    def _quarantine(self, rec: DataRecord, reason: str) -> None:
        log.error("record %s quarantined: %s", rec.record_id, reason)
        self.outbox.dead_letter(rec, reason)
        self.stats["dead_lettered"] += 1

    # -- verification --------------------------------------------------------------

    def fetch_server_records(self) -> list[dict]:
        if self.authenticate() is None:
            raise TransportError("backend unreachable")
        resp = self._send("GET", "/records")
        if resp.status == 401 and self._signup():
            resp = self._send("GET", "/records")
        if resp.status != 200:
            raise TransportError(f"record query failed with HTTP {resp.status}")
        return json.loads(resp.body)["records"]

    def verify_consistency(self, server_docs: list[dict] | None = None, local_records=None) -> ConsistencyReport:
        """Compare the on-disk outbox with the server copy (fetched when not given)."""
        if server_docs is None:
            server_docs = self.fetch_server_records()
        if local_records is None:
            local_records = self.outbox.read_all()
        return compare_records([r.to_doc() for r in local_records], server_docs, self.cipher,
                               exclude=self.outbox.dead)


def _batch_body(batch) -> bytes:
    # same bytes as json.dumps({"records": [...]}, separators=(",", ":"))
    return ('{"records":[' + ",".join(r.wire_json for r in batch) + "]}").encode("utf-8")


def _error_text(body: bytes) -> str:
    try:
        return str(json.loads(body).get("error"))
    except (ValueError, AttributeError):
        return "unparseable response"


__all__ = ["AgentConfig", "Backoff", "ConsistencyReport", "PhoneAgent", "RecordError", "compare_records"]
