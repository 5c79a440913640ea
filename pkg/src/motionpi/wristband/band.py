"""Wristband firmware state machine: commands in, notifications out."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..flash import FlashImage, FtlError, FtlGeometry
from ..flash import records
from ..signal import AccelTrace, MvpaStream, TriggerConfig
from .protocol import BandCommand, BandNotification, CommandKind, EnmoValue, NotificationKind

log = logging.getLogger(__name__)


class BandError(RuntimeError):
    pass


@dataclass
class BandConfig:
    trigger: TriggerConfig = field(default_factory=TriggerConfig)
    drain_pct_per_hour: float = 3.0
    low_battery_pct: float = 20.0
    session_file_seconds: float = 3600.0
    geometry: FtlGeometry = field(default_factory=FtlGeometry)
    # False keeps only flash state and wear counters (long simulations)
    retain_flash_data: bool = True
    storage_step_pct: float = 10.0


def _mac_bytes(mac: str) -> bytes:
    raw = bytes.fromhex(mac.replace(":", ""))
    if len(raw) != 6:
        raise ValueError(f"{mac!r} is not a 6-byte MAC address")
    return raw


class Wristband:
    def __init__(self, mac: str, side: str = "left", config: BandConfig | None = None,
                 image: FlashImage | None = None, battery_pct: float = 100.0):
        if side not in ("left", "right"):
            raise ValueError("side must be 'left' or 'right'")
        self.mac = ":".join(f"{b:02X}" for b in _mac_bytes(mac))
        self.side = side
        self.config = config or BandConfig()
        self.trigger_cfg = self.config.trigger
        self.image = image or FlashImage(self.config.geometry, retain_data=self.config.retain_flash_data).format()
        self.collecting = False
        self.participant_id: str | None = None
        self.clock: float | None = None
        self.charging = False
        self._charge_level = float(battery_pct)
        self._drain_seconds = 0.0
        self._low_reported = self._charge_level < self.config.low_battery_pct
        self._storage_reported = int(self.image.used_fraction() * 100 // self.config.storage_step_pct)
        self._stream: MvpaStream | None = None
        self._imu = None
        self._ppg = None
        self._file_seq = len(self.image.entries)
        self.samples_ingested = 0
        self.samples_stored = 0
        self._ppg_rng = np.random.default_rng(int.from_bytes(_mac_bytes(mac), "little"))

    # -- state ---------------------------------------------------------------

    @property
    def battery_pct(self) -> float:
        level = self._charge_level - self.config.drain_pct_per_hour * self._drain_seconds / 3600.0
        return max(level, 0.0)

    @property
    def files(self):
        return list(self.image.entries)

    @property
    def storage_pct(self) -> float:
        return 100.0 * self.image.used_fraction()

    # -- commands --------------------------------------------------------------

    def handle_command(self, cmd) -> list[BandNotification]:
        if isinstance(cmd, (bytes, bytearray)):
            cmd = BandCommand.decode(bytes(cmd))
        kind = cmd.kind
        if kind == CommandKind.SET_PARTICIPANT_ID:
            if self.collecting:
                raise BandError("cannot change participant id while collecting")
            self.participant_id = cmd.payload
        elif kind == CommandKind.SET_TIME:
            if self.collecting:
                raise BandError("cannot set time while collecting")
            self.clock = float(cmd.payload)
        elif kind == CommandKind.START_COLLECTION:
            if self.collecting:
                return []
            if not self.participant_id:
                raise BandError("StartCollection requires a participant id")
            if self.clock is None:
                raise BandError("StartCollection requires the time to be set")
            self._stream = MvpaStream(self.trigger_cfg, start_t=self.clock)
            self.collecting = True
            try:
                self._open_session_files()
            except FtlError:
                self.collecting = False
                self._stream = None
                return [BandNotification(NotificationKind.STORAGE_LEVEL, self.clock, 100.0)]
        elif kind == CommandKind.STOP_COLLECTION:
            return self._stop()
        elif kind == CommandKind.ERASE_STORAGE:
            if self.collecting:
                raise BandError("EraseStorage is refused while collecting")
            self.image.format()
            self._file_seq = 0
            self._storage_reported = 0
        return []

    def _stop(self) -> list[BandNotification]:
        if not self.collecting:
            return []
        notes = self._bout_notes(self._stream.flush())
        self._close_files()
        self.collecting = False
        self._stream = None
        return notes

    def _open_session_files(self, created_t: float | None = None) -> None:
        secs = self.config.session_file_seconds
        created_t = self.clock if created_t is None else created_t
        self._file_seq += 1
        self._imu = self.image.create_file(
            f"IMU{self._file_seq:05d}.BIN", int(secs * records.IMU_RATE_HZ) * records.IMU_RECORD_BYTES, created_t)
        self._ppg = self.image.create_file(
            f"PPG{self._file_seq:05d}.BIN", int(secs * records.PPG_RATE_HZ) * records.PPG_RECORD_BYTES, created_t)

    def _close_files(self) -> None:
        for e in (self._imu, self._ppg):
            if e is not None:
                self.image.close_file(e)
        self._imu = self._ppg = None

    # -- data path ---------------------------------------------------------------

    def ingest_samples(self, samples) -> list[BandNotification]:
        """Store samples and evaluate bouts; returns the notifications raised."""
        if not self.collecting:
            raise BandError("ingest_samples requires an active collection")
        trace = AccelTrace.coerce(samples)
        if len(trace) == 0:
            return []
        outcomes = self._stream.feed(trace)
        self.samples_ingested += len(trace)
        self.clock = self._stream.clock
        notes = self._bout_notes(outcomes)
        stored_ok = self._store(trace)
        notes += self._storage_notes()
        if not stored_ok:
            notes.append(BandNotification(NotificationKind.STORAGE_LEVEL, self.clock, 100.0))
            notes += self._stop()
        return notes

    def advance(self, now: float) -> list[BandNotification]:
        """Let time pass without samples (band off-wrist); closes elapsed bouts."""
        if now < (self.clock or now):
            raise BandError("band clock cannot move backwards")
        self.clock = float(now)
        if not self.collecting:
            return []
        return self._bout_notes(self._stream.advance(now))

    def _bout_notes(self, outcomes) -> list[BandNotification]:
        notes = []
        for o in outcomes:
            b = o.bout
            notes.append(BandNotification(NotificationKind.ENMO_SUMMARY, b.end_t,
                                          EnmoValue(b.start_t, b.mean_enmo, b.is_mvpa, b.sample_count, b.dropout)))
            if o.triggered:
                notes.append(BandNotification(NotificationKind.MVPA_EPOCH, b.end_t, True))
        return notes

    def _store(self, trace: AccelTrace) -> bool:
        n = len(trace)
        retain = self.image.nand.retain_data
        imu = records.encode_imu(trace.ax, trace.ay, trace.az) if retain else bytes(n * records.IMU_RECORD_BYTES)
        ppg = self._synth_ppg(trace.t) if retain else bytes(2 * n * records.PPG_RECORD_BYTES)
        per_imu = records.IMU_RECORD_BYTES
        per_ppg = 2 * records.PPG_RECORD_BYTES
        pos = 0
        try:
            while pos < n:
                k = min(n - pos, self._imu.remaining // per_imu, self._ppg.remaining // per_ppg)
                if k == 0:
                    # both files of the pair fill at the same sample; roll them together
                    self._close_files()
                    self._open_session_files(float(trace.t[pos]))
                    continue
                self.image.append(self._imu, imu[pos * per_imu:(pos + k) * per_imu])
                self.image.append(self._ppg, ppg[pos * per_ppg:(pos + k) * per_ppg])
                pos += k
                self.samples_stored += k
        except FtlError as exc:
            log.warning("band %s storage exhausted: %s", self.mac, exc)
            return False
        return True

    def _synth_ppg(self, t: np.ndarray) -> bytes:
        # two PPG samples per IMU sample period; content is never analysed
        tp = np.repeat(t, 2) + np.tile([0.0, 1.0 / records.PPG_RATE_HZ], len(t))
        beat = np.sin(2 * np.pi * 1.2 * tp)
        noise = self._ppg_rng.normal(0.0, 300.0, (len(tp), 3))
        base = np.array([180_000.0, 240_000.0, 9_000.0])
        amp = np.array([6_000.0, 4_000.0, 0.0])
        ch = base + np.outer(beat, amp) + noise
        return records.encode_ppg(np.clip(np.rint(ch), 0, (1 << 24) - 1).astype(np.uint32))

    def _storage_notes(self) -> list[BandNotification]:
        step = int(self.storage_pct // self.config.storage_step_pct)
        if step > self._storage_reported:
            self._storage_reported = step
            return [BandNotification(NotificationKind.STORAGE_LEVEL, self.clock, self.storage_pct)]
        return []

    # -- power --------------------------------------------------------------------

    def tick_battery(self, elapsed: float) -> list[BandNotification]:
        if elapsed < 0:
            raise ValueError("elapsed must be non-negative")
        self._drain_seconds += elapsed
        after = self.battery_pct
        if after < self.config.low_battery_pct and not self._low_reported:
            self._low_reported = True
            return [BandNotification(NotificationKind.BATTERY_LEVEL, self.clock or 0.0, after)]
        return []

    def set_charging(self, charging: bool, level_pct: float | None = None) -> list[BandNotification]:
        self.charging = charging
        if level_pct is not None:
            self._charge_level = float(level_pct)
            self._drain_seconds = 0.0
            if self._charge_level >= self.config.low_battery_pct:
                self._low_reported = False
        return [BandNotification(NotificationKind.CHARGING_STATUS, self.clock or 0.0, charging)]
