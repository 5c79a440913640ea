"""Server-side schema checks for uploaded records.

Each validator returns ``None`` for a valid document or a short reason.
"""
from __future__ import annotations

import base64
import binascii
import math
import re

RECORD_TYPES = ("gps", "enmo", "survey", "battery", "event")
_UUID = re.compile(r"^[0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12}$")
SURVEY_KINDS = ("random", "activity")
SURVEY_STATUSES = ("completed", "declined", "expired")
EVENT_KINDS = (
    "bluetooth_on", "bluetooth_off", "band_connected", "band_disconnected", "collection_enabled",
    "collection_disabled", "battery_below_20", "survey_triggered", "survey_notified", "survey_declined",
    "survey_expired", "survey_completed",
)
RECORD_FIELDS = ("record_id", "record_type", "participant_id", "phone_id", "username", "timestamp", "payload")
_FIELD_SET = frozenset(RECORD_FIELDS)


def is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _nonempty_str(v) -> bool:
    return isinstance(v, str) and bool(v.strip())


def _b64(v, *, exact: int | None = None, multiple: int | None = None) -> bool:
    if not isinstance(v, str):
        return False
    try:
        raw = base64.b64decode(v, validate=True)
    except (binascii.Error, ValueError):
        return False
    if exact is not None and len(raw) != exact:
        return False
    return not multiple or (raw and len(raw) % multiple == 0)


def _int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _check_gps(p: dict) -> str | None:
    if not _b64(p.get("iv"), exact=16):
        return "payload.iv must be 16 base64-encoded bytes"
    if not _b64(p.get("ciphertext"), multiple=16):
        return "payload.ciphertext must be base64 AES blocks"
    if not _nonempty_str(p.get("key_id")):
        return "payload.key_id is required"
    return None


def _check_enmo(p: dict) -> str | None:
    if not is_number(p.get("bout_start")):
        return "payload.bout_start must be a number"
    d = p.get("duration")
    if not is_number(d) or d <= 0:
        return "payload.duration must be a positive number"
    bands = p.get("bands")
    if not isinstance(bands, list) or not bands:
        return "payload.bands must be a non-empty array"
    for i, b in enumerate(bands):
        if not (isinstance(b, dict) and _nonempty_str(b.get("band_mac")) and b.get("side") in ("left", "right")
                and is_number(b.get("mean_enmo")) and b["mean_enmo"] >= 0
                and isinstance(b.get("is_mvpa"), bool) and isinstance(b.get("dropout"), bool)
                and _int(b.get("sample_count")) and b["sample_count"] >= 0):
            return f"payload.bands[{i}] invalid"
    return None


def _check_survey(p: dict) -> str | None:
    if not _nonempty_str(p.get("survey_id")):
        return "payload.survey_id is required"
    if p.get("kind") not in SURVEY_KINDS:
        return "payload.kind invalid"
    if p.get("status") not in SURVEY_STATUSES:
        return "payload.status invalid"
    if not (is_number(p.get("triggered_t")) and is_number(p.get("resolved_t"))):
        return "payload.triggered_t and resolved_t must be numbers"
    if "responses" not in p or not (p["responses"] is None or isinstance(p["responses"], dict)):
        return "payload.responses must be an object or null"
    return None


def _pct(v) -> bool:
    return is_number(v) and 0 <= v <= 100


def _check_battery(p: dict) -> str | None:
    if not _pct(p.get("phone_pct")):
        return "payload.phone_pct must be a percentage"
    bands = p.get("bands")
    if not isinstance(bands, list):
        return "payload.bands must be an array"
    for i, b in enumerate(bands):
        if not (isinstance(b, dict) and _nonempty_str(b.get("band_mac")) and _pct(b.get("pct"))):
            return f"payload.bands[{i}] invalid"
    return None


def _check_event(p: dict) -> str | None:
    if p.get("event_kind") not in EVENT_KINDS:
        return "payload.event_kind invalid"
    if "band_mac" not in p or not (p["band_mac"] is None or _nonempty_str(p["band_mac"])):
        return "payload.band_mac must be a string or null"
    if not _nonempty_str(p.get("local_time")):
        return "payload.local_time is required"
    if not isinstance(p.get("detail"), dict):
        return "payload.detail must be an object"
    return None


_PAYLOADS = {"gps": _check_gps, "enmo": _check_enmo, "survey": _check_survey, "battery": _check_battery,
             "event": _check_event}


def validate_payload(record_type: str, payload) -> str | None:
    if not isinstance(payload, dict):
        return "payload must be an object"
    return _PAYLOADS[record_type](payload)


def validate_record(doc, route_type: str | None = None, device_id: str | None = None) -> str | None:
    """Full envelope + payload check. ``device_id`` is the authenticated phone, if any."""
    if not isinstance(doc, dict):
        return "record must be an object"
    if len(doc) > len(RECORD_FIELDS) or not _FIELD_SET.issuperset(doc):
        extra = set(doc) - _FIELD_SET
        return f"unknown fields {sorted(extra)}"
    if not isinstance(doc.get("record_id"), str) or not _UUID.match(doc["record_id"]):
        return "record_id must be a UUID string"
    rtype = doc.get("record_type")
    if rtype not in RECORD_TYPES:
        return "unknown record_type"
    if route_type is not None and rtype != route_type:
        return "record_type does not match route"
    for name in ("participant_id", "phone_id", "username"):
        if not _nonempty_str(doc.get(name)):
            return f"{name} is required"
    if doc["username"] != doc["participant_id"]:
        return "username must equal participant_id"
    if device_id is not None and doc["phone_id"] != device_id:
        return "phone_id does not match the token"
    ts = doc.get("timestamp")
    # integers are rejected too: the wire form of a UNIX time is a float
    if not isinstance(ts, float) or not math.isfinite(ts) or ts <= 0:
        return "timestamp must be a positive finite floating-point UNIX time"
    if "payload" not in doc:
        return "payload is required"
    return validate_payload(rtype, doc["payload"])
