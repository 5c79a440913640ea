"""Random and activity-triggered EMA scheduling, survey lifecycle and the event log."""
from __future__ import annotations

import logging
import random
import uuid
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta, timezone
from enum import Enum
from typing import Callable

from .survey import SurveyDefinition, load_survey

log = logging.getLogger(__name__)

SURVEY_EXPIRY_S = 1800.0


class SurveyError(RuntimeError):
    pass


class SurveyKind(str, Enum):
    RANDOM = "random"
    ACTIVITY = "activity"


class SurveyStatus(str, Enum):
    PENDING = "pending"
    COMPLETED = "completed"
    DECLINED = "declined"
    EXPIRED = "expired"


class EventKind(str, Enum):
    BLUETOOTH_ON = "bluetooth_on"
    BLUETOOTH_OFF = "bluetooth_off"
    BAND_CONNECTED = "band_connected"
    BAND_DISCONNECTED = "band_disconnected"
    COLLECTION_ENABLED = "collection_enabled"
    COLLECTION_DISABLED = "collection_disabled"
    BATTERY_BELOW_20 = "battery_below_20"
    SURVEY_TRIGGERED = "survey_triggered"
    SURVEY_NOTIFIED = "survey_notified"
    SURVEY_DECLINED = "survey_declined"
    SURVEY_EXPIRED = "survey_expired"
    SURVEY_COMPLETED = "survey_completed"


@dataclass(frozen=True)
class CollectionWindow:
    start: time = time(7, 30)
    end: time = time(21, 30)
    blocks: tuple[tuple[time, time], ...] = (
        (time(7, 30), time(12, 0)),
        (time(12, 0), time(17, 0)),
        (time(17, 0), time(21, 30)),
    )

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError("collection window start must precede its end")
        for lo, hi in self.blocks:
            if not (self.start <= lo < hi <= self.end):
                raise ValueError("survey blocks must lie inside the collection window")

    def bounds(self, day: date, utc_offset_s: float) -> tuple[float, float]:
        return _at(day, self.start, utc_offset_s), _at(day, self.end, utc_offset_s)

    def contains(self, t: float, utc_offset_s: float) -> bool:
        local = _local(t, utc_offset_s)
        return self.start <= local.time() < self.end


def _tz(utc_offset_s: float) -> timezone:
    return timezone(timedelta(seconds=utc_offset_s))


def _at(day: date, tod: time, utc_offset_s: float) -> float:
    return datetime.combine(day, tod, tzinfo=_tz(utc_offset_s)).timestamp()


def _local(t: float, utc_offset_s: float) -> datetime:
    return datetime.fromtimestamp(t, tz=_tz(utc_offset_s))


def local_time_iso(t: float, utc_offset_s: float = 0.0) -> str:
    return _local(t, utc_offset_s).isoformat(timespec="milliseconds")


def local_date(t: float, utc_offset_s: float = 0.0) -> date:
    return _local(t, utc_offset_s).date()


def plan_random_surveys(day: date, rng_seed: int, window: CollectionWindow = CollectionWindow(),
                        utc_offset_s: float = 0.0) -> list[float]:
    """One uniformly random trigger time per block of ``window``; deterministic in (seed, day)."""
    rng = random.Random(f"{rng_seed}:{day.isoformat()}")
    out = []
    for lo_tod, hi_tod in window.blocks:
        lo, hi = _at(day, lo_tod, utc_offset_s), _at(day, hi_tod, utc_offset_s)
        t = lo + rng.random() * (hi - lo)
        out.append(t if t < hi else lo)
    return out


@dataclass(frozen=True)
class EventRecord:
    event_kind: EventKind
    participant_id: str
    phone_id: str
    timestamp: float
    local_time: str
    band_mac: str | None = None
    detail: dict = field(default_factory=dict)

    def payload(self) -> dict:
        return {"event_kind": self.event_kind.value, "band_mac": self.band_mac,
                "local_time": self.local_time, "detail": dict(self.detail)}


@dataclass
class SurveyInstance:
    id: str
    kind: SurveyKind
    triggered_t: float
    expires_t: float
    status: SurveyStatus = SurveyStatus.PENDING
    responses: dict | None = None
    resolved_t: float | None = None
    band_mac: str | None = None

    @property
    def terminal(self) -> bool:
        return self.status != SurveyStatus.PENDING


@dataclass(frozen=True)
class Complete:
    t: float
    responses: dict


@dataclass(frozen=True)
class Decline:
    t: float


@dataclass(frozen=True)
class Clock:
    t: float


class EmaScheduler:
    """Drives both survey queues from a simulated clock and logs every transition.

    ``on_event`` receives each :class:`EventRecord`; ``on_resolved`` each
    survey reaching a terminal status. Random and activity surveys are
    independent queues; at most one activity survey is pending at a time.
    """

    def __init__(self, participant_id: str, phone_id: str, *, utc_offset_s: float = 0.0,
                 window: CollectionWindow = CollectionWindow(), seed: int = 0,
                 expiry_s: float = SURVEY_EXPIRY_S, survey: SurveyDefinition | None = None,
                 id_factory: Callable[[], str] | None = None,
                 on_event: Callable[[EventRecord], None] | None = None,
                 on_resolved: Callable[[SurveyInstance], None] | None = None,
                 missed_grace_s: float = 60.0):
        self.participant_id = participant_id
        self.phone_id = phone_id
        self.utc_offset_s = utc_offset_s
        self.window = window
        self.seed = seed
        self.expiry_s = expiry_s
        self.survey = survey or load_survey()
        self._new_id = id_factory or (lambda: str(uuid.uuid4()))
        self._on_event = on_event
        self._on_resolved = on_resolved
        self.missed_grace_s = missed_grace_s
        self.events: list[EventRecord] = []
        self.surveys: dict[str, SurveyInstance] = {}
        self._random_queue: list[float] = []
        self.planned_days: dict[date, list[float]] = {}
        self.suppressed: list[tuple[float, str]] = []
        self.missed: list[float] = []

    # -- logging -------------------------------------------------------------

    def log_event(self, kind: EventKind, t: float, band_mac: str | None = None, **detail) -> EventRecord:
        rec = EventRecord(EventKind(kind), self.participant_id, self.phone_id, float(t),
                          local_time_iso(t, self.utc_offset_s), band_mac, detail)
        self.events.append(rec)
        if self._on_event:
            self._on_event(rec)
        return rec

    # -- planning --------------------------------------------------------------

    def plan_day(self, day: date) -> list[float]:
        times = plan_random_surveys(day, self.seed, self.window, self.utc_offset_s)
        self.planned_days[day] = times
        self._random_queue = sorted(self._random_queue + times)
        return times

    def next_random_time(self) -> float | None:
        return self._random_queue[0] if self._random_queue else None

    def pending(self) -> list[SurveyInstance]:
        return [s for s in self.surveys.values() if s.status == SurveyStatus.PENDING]

    def next_deadline(self) -> float | None:
        times = [s.expires_t for s in self.pending()]
        if self._random_queue:
            times.append(self._random_queue[0])
        return min(times) if times else None

    # -- triggering -------------------------------------------------------------

    def _trigger(self, kind: SurveyKind, t: float, band_mac: str | None = None) -> SurveyInstance:
        inst = SurveyInstance(self._new_id(), kind, float(t), float(t) + self.expiry_s, band_mac=band_mac)
        self.surveys[inst.id] = inst
        self.log_event(EventKind.SURVEY_TRIGGERED, t, band_mac, survey_id=inst.id, survey_kind=kind.value)
        self.log_event(EventKind.SURVEY_NOTIFIED, t, band_mac, survey_id=inst.id, survey_kind=kind.value)
        return inst

    def tick(self, t: float) -> list[SurveyInstance]:
        """Advance to ``t``: expire overdue surveys, then fire due random surveys."""
        self.expire_due(t)
        fired = []
        while self._random_queue and self._random_queue[0] <= t:
            slot = self._random_queue.pop(0)
            if t - slot > self.missed_grace_s:
                self.missed.append(slot)
                log.info("random survey slot %.0f missed (now %.0f)", slot, t)
                continue
            # fire at the slot time so triggering does not depend on tick cadence
            fired.append(self._trigger(SurveyKind.RANDOM, slot))
            self.expire_due(t)
        return fired

    def expire_due(self, t: float) -> list[SurveyInstance]:
        out = []
        for inst in sorted(self.pending(), key=lambda s: (s.expires_t, s.id)):
            if inst.expires_t <= t:
                out.append(self._finish(inst, SurveyStatus.EXPIRED, inst.expires_t))
        return out

    def on_mvpa_notification(self, t: float, band_mac: str | None = None) -> SurveyInstance | None:
        self.expire_due(t)
        if not self.window.contains(t, self.utc_offset_s):
            self.suppressed.append((t, "outside_window"))
            log.info("activity survey suppressed at %.0f: outside collection window", t)
            return None
        if any(s.kind == SurveyKind.ACTIVITY for s in self.pending()):
            self.suppressed.append((t, "already_pending"))
            log.info("activity survey suppressed at %.0f: one already pending", t)
            return None
        return self._trigger(SurveyKind.ACTIVITY, t, band_mac)

    # -- resolution ----------------------------------------------------------------

    def resolve_survey(self, instance, action):
        inst = self.surveys[instance] if isinstance(instance, str) else instance
        if inst.terminal:
            raise SurveyError(f"survey {inst.id} is already {inst.status.value}")
        if action.t < inst.triggered_t:
            raise SurveyError("action precedes the survey trigger")
        if action.t >= inst.expires_t or isinstance(action, Clock):
            if action.t < inst.expires_t:
                return inst.status, None
            self._finish(inst, SurveyStatus.EXPIRED, inst.expires_t)
        elif isinstance(action, Complete):
            self.survey.validate_responses(action.responses)
            inst.responses = dict(action.responses)
            self._finish(inst, SurveyStatus.COMPLETED, action.t)
        elif isinstance(action, Decline):
            self._finish(inst, SurveyStatus.DECLINED, action.t)
        else:
            raise TypeError(f"unknown survey action {action!r}")
        return inst.status, self.events[-1]

    def _finish(self, inst: SurveyInstance, status: SurveyStatus, t: float) -> SurveyInstance:
        inst.status = status
        inst.resolved_t = t
        kind = {SurveyStatus.COMPLETED: EventKind.SURVEY_COMPLETED,
                SurveyStatus.DECLINED: EventKind.SURVEY_DECLINED,
                SurveyStatus.EXPIRED: EventKind.SURVEY_EXPIRED}[status]
        self.log_event(kind, t, inst.band_mac, survey_id=inst.id, survey_kind=inst.kind.value)
        if self._on_resolved:
            self._on_resolved(inst)
        return inst
