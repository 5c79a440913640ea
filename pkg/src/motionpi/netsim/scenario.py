"""Scenario files: schema, defaults and loading.

A scenario is YAML (or JSON). All times in ``network.outages`` are seconds
from local midnight of ``start_date``. Every key below is optional except
``days`` and ``participants``::

    name: two-phones              # label copied into the report
    seed: 7                       # server secret and simulation keys derive from it
    start_date: "2025-01-06"      # first simulated local day
    days: 1
    utc_offset_s: 0               # participants' local time offset
    participants:
      - participant_id: motionpi001
        phone_id: phone-001
        rng_seed: 11              # drives signals, behaviour, record ids and IVs
        profile: mixed            # sedentary | walking | vigorous | mixed | [{start: "HH:MM", state: ...}]
        band_battery_pct: 100     # band charge at the first day's start
        home: [40.76, -111.89]    # centre of the synthetic GPS walk
    network:
      latency_s: 0.05
      drop_mode: refuse_connection   # default mode for outages without their own
      outages: [{start: 36000, end: 43200, mode: timeout}]
      upload_interval_s: 300      # background sync period
      drain_s: 86400              # max extra time after the run to finish uploads
    behavior:
      p_complete: 0.7             # per survey; the rest of the mass is ignored
      p_decline: 0.1
      delay_mean_s: 300           # exponential response delay
    rates:
      gps_interval_s: 60
      battery_interval_s: 3600
    sim:
      tick_s: 60                  # sensor chunk length
      sample_rate_hz: 32
    overrides:
      trigger: {mvpa_threshold: 0.1006}
      drain_pct_per_hour: 3.0
      geometry: {nand_capacity: 251658240}
      retain_flash_data: false
      batch_size: 500
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import date

import jsonschema
import yaml

from ..flash import FtlGeometry, GeometryError, MiB
from ..signal import TriggerConfig
from .link import DropMode, OutageSchedule
from .profiles import STATES

_NUM = {"type": "number"}
_NONNEG = {"type": "number", "minimum": 0}
_PROB = {"type": "number", "minimum": 0, "maximum": 1}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["days", "participants"],
    "properties": {
        "name": {"type": "string"},
        "seed": {"type": "integer"},
        "start_date": {"type": "string", "pattern": r"^\d{4}-\d{2}-\d{2}$"},
        "days": {"type": "integer", "minimum": 1, "maximum": 60},
        "utc_offset_s": {"type": "integer", "minimum": -50400, "maximum": 50400},
        "participants": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["participant_id", "phone_id", "rng_seed"],
                "properties": {
                    "participant_id": {"type": "string", "minLength": 1, "maxLength": 32},
                    "phone_id": {"type": "string", "minLength": 1},
                    "rng_seed": {"type": "integer"},
                    "profile": {"oneOf": [
                        {"enum": [*STATES, "mixed"]},
                        {"type": "array", "minItems": 1, "items": {
                            "type": "object", "additionalProperties": False, "required": ["start", "state"],
                            "properties": {"start": {"type": "string", "pattern": r"^\d{2}:\d{2}(:\d{2})?$"},
                                           "state": {"enum": list(STATES)}}}},
                    ]},
                    "band_battery_pct": {"type": "number", "minimum": 0, "maximum": 100},
                    "home": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
                },
            },
        },
        "network": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "latency_s": _NONNEG,
                "drop_mode": {"enum": [m.value for m in DropMode]},
                "outages": {"type": "array", "items": {
                    "type": "object", "additionalProperties": False, "required": ["start", "end"],
                    "properties": {"start": _NONNEG, "end": _NONNEG, "mode": {"enum": [m.value for m in DropMode]}}}},
                "upload_interval_s": {"type": "number", "exclusiveMinimum": 0},
                "drain_s": _NONNEG,
            },
        },
        "behavior": {
            "type": "object", "additionalProperties": False,
            "properties": {"p_complete": _PROB, "p_decline": _PROB, "delay_mean_s": _NONNEG},
        },
        "rates": {
            "type": "object", "additionalProperties": False,
            "properties": {"gps_interval_s": {"type": "number", "exclusiveMinimum": 0},
                           "battery_interval_s": {"type": "number", "exclusiveMinimum": 0}},
        },
        "sim": {
            "type": "object", "additionalProperties": False,
            "properties": {"tick_s": {"type": "number", "exclusiveMinimum": 0, "maximum": 3600},
                           "sample_rate_hz": {"type": "number", "exclusiveMinimum": 0, "maximum": 1000}},
        },
        "overrides": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "trigger": {"type": "object"},
                "drain_pct_per_hour": _NONNEG,
                "geometry": {"type": "object", "additionalProperties": {"type": "integer"}},
                "retain_flash_data": {"type": "boolean"},
                "batch_size": {"type": "integer", "minimum": 1},
            },
        },
    },
}

# 240 MiB of NAND holds a bit over two days of 32 Hz IMU + 64 Hz PPG per band
SCENARIO_GEOMETRY = {"nand_capacity": 240 * MiB}


class ScenarioError(ValueError):
    """Invalid scenario. ``errors`` lists ``(field_path, message)`` pairs."""

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        super().__init__("; ".join(f"{p or '<root>'}: {m}" for p, m in errors))


def _path(parts) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


@dataclass(frozen=True)
class ParticipantSpec:
    participant_id: str
    phone_id: str
    rng_seed: int
    profile: object = "mixed"
    band_battery_pct: float = 100.0
    home: tuple[float, float] = (40.7608, -111.8910)


@dataclass(frozen=True)
class Scenario:
    participants: tuple[ParticipantSpec, ...]
    days: int
    name: str = "scenario"
    seed: int = 0
    start_date: date = date(2025, 1, 6)
    utc_offset_s: int = 0
    outages: OutageSchedule = field(default_factory=OutageSchedule)
    latency_s: float = 0.05
    upload_interval_s: float = 300.0
    drain_s: float = 86400.0
    p_complete: float = 0.7
    p_decline: float = 0.1
    delay_mean_s: float = 300.0
    gps_interval_s: float = 60.0
    battery_interval_s: float = 3600.0
    tick_s: float = 60.0
    sample_rate_hz: float = 32.0
    trigger: dict = field(default_factory=dict)
    drain_pct_per_hour: float = 3.0
    geometry: dict = field(default_factory=lambda: dict(SCENARIO_GEOMETRY))
    retain_flash_data: bool = False
    batch_size: int = 500

    def trigger_config(self) -> TriggerConfig:
        return TriggerConfig.from_dict({**self.trigger, "sample_rate_hz": self.sample_rate_hz})

    def ftl_geometry(self) -> FtlGeometry:
        return FtlGeometry.from_dict(self.geometry)


def _error_path(e: jsonschema.ValidationError) -> str:
    parts = list(e.absolute_path)
    if e.validator == "required" and isinstance(e.instance, dict):
        # point at the missing key rather than its parent
        missing = [k for k in e.validator_value if k not in e.instance and e.message.startswith(repr(k))]
        parts += missing[:1]
    return _path(parts)


def parse_scenario(doc) -> Scenario:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if errors:
        raise ScenarioError([(_error_path(e), e.message) for e in errors])
    problems: list[tuple[str, str]] = []
    try:
        start = date.fromisoformat(doc.get("start_date", "2025-01-06"))
    except ValueError as exc:
        problems.append(("start_date", str(exc)))
        start = date(2025, 1, 6)
    parts = []
    seen_p, seen_ph = set(), set()
    for i, p in enumerate(doc["participants"]):
        if p["participant_id"] in seen_p:
            problems.append((f"participants[{i}].participant_id", "duplicate participant_id"))
        if p["phone_id"] in seen_ph:
            problems.append((f"participants[{i}].phone_id", "duplicate phone_id"))
        seen_p.add(p["participant_id"])
        seen_ph.add(p["phone_id"])
        home = tuple(p.get("home", (40.7608, -111.8910)))
        if not (-90 <= home[0] <= 90 and -180 <= home[1] <= 180):
            problems.append((f"participants[{i}].home", "coordinates out of range"))
        parts.append(ParticipantSpec(p["participant_id"], p["phone_id"], p["rng_seed"], p.get("profile", "mixed"),
                                     float(p.get("band_battery_pct", 100.0)), home))
    net = doc.get("network", {})
    outages = OutageSchedule()
    raw_outages = net.get("outages", [])
    n_problems = len(problems)
    for i, o in enumerate(raw_outages):
        if not o["start"] < o["end"]:
            problems.append((f"network.outages[{i}]", "start must precede end"))
        elif i and o["start"] < raw_outages[i - 1]["end"]:
            problems.append((f"network.outages[{i}]", "overlaps or precedes the previous outage"))
    if len(problems) == n_problems:
        outages = OutageSchedule([(o["start"], o["end"], o.get("mode", net.get("drop_mode", "refuse_connection")))
                                  for o in raw_outages], net.get("drop_mode", "refuse_connection"))
    beh = doc.get("behavior", {})
    if beh.get("p_complete", 0.7) + beh.get("p_decline", 0.1) > 1:
        problems.append(("behavior", "p_complete + p_decline must not exceed 1"))
    ov = doc.get("overrides", {})
    sim = doc.get("sim", {})
    rates = doc.get("rates", {})
    kw = dict(
        participants=tuple(parts), days=doc["days"], name=doc.get("name", "scenario"), seed=doc.get("seed", 0),
        start_date=start, utc_offset_s=doc.get("utc_offset_s", 0), outages=outages,
        latency_s=float(net.get("latency_s", 0.05)), upload_interval_s=float(net.get("upload_interval_s", 300.0)),
        drain_s=float(net.get("drain_s", 86400.0)), p_complete=float(beh.get("p_complete", 0.7)),
        p_decline=float(beh.get("p_decline", 0.1)), delay_mean_s=float(beh.get("delay_mean_s", 300.0)),
        gps_interval_s=float(rates.get("gps_interval_s", 60.0)),
        battery_interval_s=float(rates.get("battery_interval_s", 3600.0)),
        tick_s=float(sim.get("tick_s", 60.0)), sample_rate_hz=float(sim.get("sample_rate_hz", 32.0)),
        trigger=dict(ov.get("trigger", {})), drain_pct_per_hour=float(ov.get("drain_pct_per_hour", 3.0)),
        geometry={**SCENARIO_GEOMETRY, **ov.get("geometry", {})},
        retain_flash_data=bool(ov.get("retain_flash_data", False)), batch_size=int(ov.get("batch_size", 500)),
    )
    scenario = Scenario(**kw)
    try:
        scenario.trigger_config()
    except (ValueError, TypeError) as exc:
        problems.append(("overrides.trigger", str(exc)))
    try:
        scenario.ftl_geometry().validate()
    except (GeometryError, ValueError, TypeError) as exc:
        problems.append(("overrides.geometry", str(exc)))
    if problems:
        raise ScenarioError(problems)
    return scenario


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    except (ValueError, yaml.YAMLError) as exc:
        raise ScenarioError([("", f"cannot parse {path}: {exc}")]) from None
    return parse_scenario(doc)
