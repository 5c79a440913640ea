"""Deterministic end-to-end runs: bands -> phone agent -> lossy link -> backend."""
from __future__ import annotations

import hashlib
import json
import math
import os
import random
import tempfile
import uuid
from collections import Counter
from dataclasses import dataclass
from datetime import datetime, time, timedelta, timezone

import numpy as np

from ..agent import AgentConfig, PhoneAgent
from ..backend import BackendConfig, BackendService
from ..ema import Complete, Decline, EventKind, SurveyStatus
from ..wristband import BandCommand, BandConfig, BleChannel, Wristband
from .clock import EventQueue, VirtualClock
from .link import OutageSchedule, SimulatedLink
from .profiles import AccelGenerator, ActivityProfile
from .scenario import Scenario

SIM_KEY_ID = "sim-k1"


def _round(x: float, nd: int = 6) -> float:
    return float(round(x, nd))


def _seed_int(seq: np.random.SeedSequence) -> int:
    return int(seq.generate_state(2, dtype=np.uint64)[0])


def sim_key_hex(scenario_seed: int, participant_id: str) -> str:
    """Simulation-only AES key; derived so reruns reproduce ciphertexts."""
    return hashlib.sha256(f"motionpi-sim-key:{scenario_seed}:{participant_id}".encode()).hexdigest()


class ParticipantSim:
    def __init__(self, idx: int, spec, scenario: Scenario, clock: VirtualClock, queue: EventQueue,
                 link: SimulatedLink, outbox_dir: str):
        self.idx, self.spec, self.sc = idx, spec, scenario
        self.clock, self.queue = clock, queue
        root = np.random.SeedSequence([scenario.seed & 0xFFFFFFFF, spec.rng_seed & 0xFFFFFFFF, idx])
        s_prof, s_left, s_right, s_gps, s_beh, s_ids, s_iv, s_backoff = root.spawn(8)
        self.profile = ActivityProfile.from_spec(spec.profile, np.random.default_rng(s_prof))
        self.gps_rng = np.random.default_rng(s_gps)
        self.behavior = random.Random(_seed_int(s_beh))
        id_rng = random.Random(_seed_int(s_ids))
        iv_rng = random.Random(_seed_int(s_iv))
        self.config = AgentConfig(
            participant_id=spec.participant_id, phone_id=spec.phone_id,
            aes_key_hex=sim_key_hex(scenario.seed, spec.participant_id), key_id=SIM_KEY_ID,
            utc_offset_s=scenario.utc_offset_s, batch_size=scenario.batch_size,
            drain_pct_per_hour=scenario.drain_pct_per_hour, trigger=dict(scenario.trigger),
            ema_seed=spec.rng_seed)
        self.agent = PhoneAgent(self.config, outbox_dir, transport=link, clock=clock.now,
                                rng=random.Random(_seed_int(s_backoff)), iv_source=iv_rng.randbytes,
                                id_source=lambda: str(uuid.UUID(int=id_rng.getrandbits(128), version=4)))
        band_cfg = BandConfig(trigger=scenario.trigger_config(), drain_pct_per_hour=scenario.drain_pct_per_hour,
                              geometry=scenario.ftl_geometry(), retain_flash_data=scenario.retain_flash_data)
        self.bands = []
        for side, s in (("left", s_left), ("right", s_right)):
            mac = "02:4D:50:%02X:%02X:%02X" % ((idx >> 8) & 0xFF, idx & 0xFF, 0x01 if side == "left" else 0x02)
            band = Wristband(mac, side, band_cfg, battery_pct=spec.band_battery_pct)
            self.bands.append(_BandLink(band, BleChannel(), AccelGenerator(np.random.default_rng(s),
                                                                            scenario.sample_rate_hz)))
        self.tz = timezone(timedelta(seconds=scenario.utc_offset_s))
        self.lat, self.lon = spec.home
        self.battery_trace = {b.band.mac: [] for b in self.bands}
        self.day = -1
        self.window_end = None
        self.last_tick = None
        self.next_gps = self.next_batt = None
        self.done_syncing = False
        run_end = self.at(scenario.days, time(0, 0))
        last_outage = scenario.outages.last_end
        self.quiet_after = run_end if last_outage is None else max(run_end, self.at(0, time(0, 0)) + last_outage)

    # -- helpers -------------------------------------------------------------

    def at(self, day: int, tod: time) -> float:
        d = self.sc.start_date + timedelta(days=day)
        return datetime.combine(d, tod, tzinfo=self.tz).timestamp()

    def push(self, t: float, fn) -> None:
        self.queue.push(t, self.idx, fn)

    def _command(self, bl: "_BandLink", cmd: BandCommand) -> None:
        bl.channel.send_command(cmd)
        for c in bl.channel.take_commands():
            bl.channel.notify(bl.band.handle_command(c))
        self._deliver(bl)

    def _deliver(self, bl: "_BandLink") -> None:
        notes = bl.channel.take_notifications()
        if notes:
            n_before = len(self.agent.ema.surveys)
            self.agent.handle_notifications(bl.band.mac, notes)
            self._new_surveys(n_before)

    def _new_surveys(self, n_before: int) -> None:
        surveys = list(self.agent.ema.surveys.values())[n_before:]
        # activity surveys trigger at bout end, which can lie inside the tick just simulated
        now = self.clock.now()
        for inst in surveys:
            self.push(max(now, inst.expires_t), self._expire)
            u = self.behavior.random()
            delay = self.behavior.expovariate(1.0 / self.sc.delay_mean_s) if self.sc.delay_mean_s > 0 else 0.0
            if u < self.sc.p_complete:
                responses = self.agent.ema.survey.sample_responses(self.behavior)
                self.push(max(now, inst.triggered_t + delay),
                          lambda t, i=inst, r=responses: self._resolve(i, Complete(t, r)))
            elif u < self.sc.p_complete + self.sc.p_decline:
                self.push(max(now, inst.triggered_t + delay), lambda t, i=inst: self._resolve(i, Decline(t)))

    def _resolve(self, inst, action) -> None:
        if inst.status == SurveyStatus.PENDING:
            self.agent.ema.resolve_survey(inst, action)

    def _expire(self, t: float) -> None:
        self.agent.ema.expire_due(t)

    def _ema_tick(self, t: float) -> None:
        n_before = len(self.agent.ema.surveys)
        self.agent.ema.tick(t)
        self._new_surveys(n_before)

    # -- day cycle -----------------------------------------------------------

    def schedule(self) -> None:
        for d in range(self.sc.days):
            self.push(self.at(d, self.agent.ema.window.start), self.day_start)
        self.push(self.at(0, time(0, 0)) + self.sc.upload_interval_s, self.sync)

    def day_start(self, t: float) -> None:
        self.day += 1
        self.agent.charge_phone(100.0)
        self.agent.log_event(EventKind.BLUETOOTH_ON, t)
        for bl in self.bands:
            if self.day > 0:
                self._command_charge(bl)
            self.agent.connect_band(bl.band.mac, bl.band.side, t)
            self._command(bl, BandCommand.set_participant_id(self.spec.participant_id))
            self._command(bl, BandCommand.set_time(t))
            self._command(bl, BandCommand.start_collection())
            bl.session_start, bl.sent = t, 0
            self.agent.band_battery[bl.band.mac] = bl.band.battery_pct
        self.agent.log_event(EventKind.COLLECTION_ENABLED, t)
        local_day = (self.sc.start_date + timedelta(days=self.day))
        for slot in self.agent.ema.plan_day(local_day):
            self.push(slot, self._ema_tick)
        self.window_end = self.at(self.day, self.agent.ema.window.end)
        self.last_tick = t
        self.next_gps = self.next_batt = t
        self.push(min(t + self.sc.tick_s, self.window_end), self.sensor_tick)

    def _command_charge(self, bl: "_BandLink") -> None:
        bl.channel.notify(bl.band.set_charging(True, 100.0))
        bl.channel.notify(bl.band.set_charging(False))
        self._deliver(bl)

    def sensor_tick(self, t: float) -> None:
        elapsed = t - self.last_tick
        mid = 0.5 * (self.last_tick + t)
        local = datetime.fromtimestamp(mid, tz=self.tz)
        state = self.profile.state_at(local.hour * 3600 + local.minute * 60 + local.second)
        rate = self.sc.sample_rate_hz
        for bl in self.bands:
            band = bl.band
            if band.collecting:
                total = math.ceil(round((t - bl.session_start) * rate, 6))
                n = total - bl.sent
                if n > 0:
                    trace = bl.gen.chunk(bl.session_start + bl.sent / rate, n, state)
                    bl.sent = total
                    bl.channel.notify(band.ingest_samples(trace))
                if not band.collecting:
                    self.agent.disconnect_band(band.mac, t)
            bl.channel.notify(band.tick_battery(elapsed))
            self.agent.band_battery[band.mac] = band.battery_pct
            self._deliver(bl)
        self.agent.drain_battery(elapsed)
        while self.next_gps < t:
            self._gps(self.next_gps)
            self.next_gps += self.sc.gps_interval_s
        while self.next_batt < t:
            self.agent.record_battery(self.next_batt)
            for bl in self.bands:
                self.battery_trace[bl.band.mac].append(
                    [_round((self.next_batt - self.at(0, time(0, 0))) / 3600.0, 4), _round(bl.band.battery_pct, 4)])
            self.next_batt += self.sc.battery_interval_s
        self._ema_tick(t)
        self.last_tick = t
        if t < self.window_end:
            self.push(min(t + self.sc.tick_s, self.window_end), self.sensor_tick)
        else:
            self.day_end(t)

    def _gps(self, t: float) -> None:
        step = self.gps_rng.normal(0.0, 2e-4, 2)
        self.lat = float(np.clip(self.lat + step[0], -89.9, 89.9))
        self.lon = float(np.clip(self.lon + step[1], -179.9, 179.9))
        self.agent.record_gps(round(self.lat, 6), round(self.lon, 6), t)

    def day_end(self, t: float) -> None:
        for bl in self.bands:
            self._command(bl, BandCommand.stop_collection())
        self.agent.flush_enmo()
        self.agent.log_event(EventKind.COLLECTION_DISABLED, t)
        for bl in self.bands:
            if bl.band.mac in self.agent.bands:
                self.agent.disconnect_band(bl.band.mac, t)
        self.agent.log_event(EventKind.BLUETOOTH_OFF, t)

    # -- background sync -------------------------------------------------------

    def sync(self, t: float) -> None:
        agent = self.agent
        agent.ema.expire_due(t)
        agent.upload_pending()
        idle = not agent.outbox.pending_count() and not agent.ema.pending()
        if t >= self.quiet_after and (idle or t > self.quiet_after + self.sc.drain_s):
            self.done_syncing = True
            return
        nxt = t + self.sc.upload_interval_s
        if agent.backoff.failures and t < agent.backoff.next_t < nxt:
            # retry as soon as the backoff allows
            nxt = agent.backoff.next_t
        self.push(nxt, self.sync)

    # -- reporting ---------------------------------------------------------------

    def summary(self, server_docs: list[dict]) -> dict:
        a = self.agent
        local = a.outbox.read_all()
        report = a.verify_consistency(server_docs, local)
        tallies = {k: {s.value: 0 for s in SurveyStatus if s != SurveyStatus.PENDING} for k in ("random", "activity")}
        for inst in a.ema.surveys.values():
            if inst.status != SurveyStatus.PENDING:
                tallies[inst.kind.value][inst.status.value] += 1
        server_by_type = Counter(d["record_type"] for d in server_docs)
        return {
            "participant_id": self.spec.participant_id,
            "phone_id": self.spec.phone_id,
            "local_records": dict(sorted(Counter(r.record_type for r in local).items())),
            "local_total": len(local),
            "server_records": dict(sorted(server_by_type.items())),
            "server_total": len(server_docs),
            "pending_uploads": a.outbox.pending_count(),
            "surveys": tallies,
            "surveys_pending": len(a.ema.pending()),
            "activity_suppressed": len(a.ema.suppressed),
            "random_missed": len(a.ema.missed),
            "events": dict(sorted(Counter(e.event_kind.value for e in a.ema.events).items())),
            "agent": dict(sorted(a.stats.items())),
            "phone_battery_pct": _round(a.phone_pct, 4),
            "bands": [bl.summary(self.battery_trace[bl.band.mac]) for bl in self.bands],
            "consistency": report.to_dict(),
        }


@dataclass
class _BandLink:
    band: Wristband
    channel: BleChannel
    gen: AccelGenerator
    session_start: float = 0.0
    sent: int = 0

    def summary(self, trace) -> dict:
        b = self.band
        return {"mac": b.mac, "side": b.side, "battery_pct": _round(b.battery_pct, 4), "battery_trace": trace,
                "storage_pct": _round(b.storage_pct, 4), "files": len(b.files),
                "samples_stored": b.samples_stored, "wear": b.image.wear_report().as_dict()}


class RunReport:
    def __init__(self, doc: dict):
        self.doc = doc

    @property
    def consistent(self) -> bool:
        return self.doc["consistent"]

    @property
    def exit_code(self) -> int:
        return 0 if self.consistent else 1

    def to_json(self) -> str:
        return json.dumps(self.doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def replay_uploads(service: BackendService, uploads, times: int = 2) -> dict:
    """Re-send every captured upload request ``times`` times; report whether the store moved."""
    before_dump, before_count = service.store.dump(), service.store.count()
    for path, headers, body in list(uploads):
        for _ in range(times):
            service.handle("POST", path, headers, body)
    return {"performed": True, "requests": times * len(uploads), "count_before": before_count,
            "count_after": service.store.count(), "store_unchanged": service.store.dump() == before_dump}


def run_scenario(scenario: Scenario, out_dir=None, *, capture: bool = False, replay_check: bool = False,
                 return_state: bool = False, keep_uploads: bool = False):
    """Run ``scenario`` to quiescence and return its :class:`RunReport`.

    With ``out_dir`` the outboxes, agent configs, server store dump, wire
    capture (if ``capture``) and ``report.json`` are written there.
    ``replay_check`` re-sends every upload request twice after the run and
    records whether the store changed. ``return_state`` also returns the
    live objects (service, link, participant sims) for inspection;
    ``keep_uploads`` retains delivered upload requests on ``link.uploads``.
    """
    tmp = None
    if out_dir is None:
        tmp = tempfile.TemporaryDirectory(prefix="motionpi-run-")
        root = tmp.name
    else:
        root = os.fspath(out_dir)
        os.makedirs(root, exist_ok=True)
    try:
        midnight = datetime.combine(scenario.start_date, time(0, 0),
                                    tzinfo=timezone(timedelta(seconds=scenario.utc_offset_s))).timestamp()
        clock = VirtualClock(midnight)
        secret = hashlib.sha256(f"motionpi-sim-secret:{scenario.seed}".encode()).hexdigest()
        service = BackendService(BackendConfig(token_secret=secret), clock=clock.now)
        shifted = OutageSchedule([(midnight + o.start, midnight + o.end, o.mode) for o in scenario.outages.intervals])
        link = SimulatedLink(service, clock, shifted, scenario.latency_s, capture=capture,
                             keep_uploads=replay_check or keep_uploads)
        queue = EventQueue()
        sims = []
        for i, spec in enumerate(scenario.participants):
            pdir = os.path.join(root, "participants", spec.participant_id)
            sim = ParticipantSim(i, spec, scenario, clock, queue, link, os.path.join(pdir, "outbox"))
            sim.config.dump(os.path.join(pdir, "agent.yaml"))
            sim.schedule()
            sims.append(sim)
        events = queue.run(clock)

        participants = []
        for sim in sims:
            server_docs = service.store.query(phone_id=sim.spec.phone_id)
            participants.append(sim.summary(server_docs))
        replay = {"performed": False}
        if replay_check:
            replay = replay_uploads(service, link.uploads)
        consistent = all(not (p["consistency"]["missing_on_server"] or p["consistency"]["missing_locally"]
                              or p["consistency"]["mismatched"]) for p in participants)
        known = {s.spec.phone_id for s in sims}
        stray = sum(1 for d in service.store.query() if d["phone_id"] not in known)
        doc = {
            "scenario": scenario.name,
            "seed": scenario.seed,
            "days": scenario.days,
            "participants": participants,
            "totals": {
                "local_records": sum(p["local_total"] for p in participants),
                "server_records": service.store.count(),
                "server_by_type": service.store.counts_by_type(),
                "stray_server_records": stray,
            },
            "network": {**link.stats.as_dict(), "outages": len(shifted.intervals),
                        "outage_seconds": _round(shifted.total_seconds, 3)},
            "replay_check": replay,
            "events_processed": events,
            "sim_end_t": _round(clock.now(), 3),
            "consistent": consistent and stray == 0,
        }
        report = RunReport(doc)
        if out_dir is not None:
            with open(os.path.join(root, "report.json"), "w", encoding="utf-8") as fh:
                fh.write(report.to_json())
            os.makedirs(os.path.join(root, "server"), exist_ok=True)
            with open(os.path.join(root, "server", "store.jsonl"), "w", encoding="utf-8") as fh:
                fh.write(service.store.dump())
            if capture:
                with open(os.path.join(root, "wire.jsonl"), "w", encoding="utf-8") as fh:
                    for f in link.frames:
                        fh.write(json.dumps({"t": f.t, "method": f.method, "path": f.path, "outcome": f.outcome,
                                             "request": f.request.decode("utf-8", "replace"),
                                             "response": f.response.decode("utf-8", "replace")}) + "\n")
        for sim in sims:
            sim.agent.close()
        if return_state:
            return report, {"service": service, "link": link, "sims": sims, "clock": clock}
        return report
    finally:
        if tmp is not None:
            tmp.cleanup()
