"""ENMO, 15-second bout summaries and trailing-epoch MVPA detection."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from . import kernels

FULL_SCALE_G = 16.0


class SignalError(ValueError):
    """Invalid accelerometer input (non-finite, out of range, unordered, empty)."""


@dataclass(frozen=True)
class AccelSample:
    t: float
    ax: float
    ay: float
    az: float


@dataclass(frozen=True)
class TriggerConfig:
    mvpa_threshold: float = 0.1006
    bout_seconds: float = 15.0
    epoch_seconds: float = 420.0
    mvpa_required_seconds: float = 294.0
    sample_rate_hz: float = 32.0
    # bouts with less than this fraction of expected samples never count as MVPA
    min_coverage: float = 0.5
    # absolute slack on the threshold comparison; keeps a mean that is
    # exactly the threshold in decimal from tripping on binary rounding
    compare_tolerance: float = 1e-9

    def __post_init__(self):
        if self.bout_seconds <= 0 or self.epoch_seconds <= 0 or self.sample_rate_hz <= 0:
            raise ValueError("bout, epoch and sample rate must be positive")
        if self.mvpa_required_seconds > self.epoch_seconds:
            raise ValueError("mvpa_required_seconds must not exceed epoch_seconds")
        ratio = self.epoch_seconds / self.bout_seconds
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("epoch_seconds must be a multiple of bout_seconds")

    @property
    def bouts_per_epoch(self) -> int:
        return int(round(self.epoch_seconds / self.bout_seconds))

    @property
    def expected_samples(self) -> float:
        return self.bout_seconds * self.sample_rate_hz

    def exceeds(self, mean_enmo: float) -> bool:
        return mean_enmo > self.mvpa_threshold + self.compare_tolerance

    @classmethod
    def from_dict(cls, doc: dict | None) -> "TriggerConfig":
        doc = dict(doc or {})
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown trigger config fields: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in doc.items()})


@dataclass(frozen=True)
class BoutSummary:
    start_t: float
    duration: float
    mean_enmo: float
    is_mvpa: bool
    sample_count: int
    dropout: bool = False

    @property
    def end_t(self) -> float:
        return self.start_t + self.duration


class EpochResult(NamedTuple):
    is_mvpa: bool
    complete: bool
    mvpa_bouts: int

    def __bool__(self) -> bool:
        return self.is_mvpa


def compute_enmo(sample: AccelSample) -> float:
    """Euclidean norm minus one g, truncated at zero."""
    ax, ay, az = sample.ax, sample.ay, sample.az
    if not (math.isfinite(ax) and math.isfinite(ay) and math.isfinite(az)):
        raise SignalError(f"non-finite acceleration at t={sample.t}")
    v = math.sqrt(ax * ax + ay * ay + az * az) - 1.0
    return v if v > 0.0 else 0.0


def _make_bout(cfg: TriggerConfig, start_t: float, total: float, count: int) -> BoutSummary:
    mean = total / count if count else 0.0
    dropout = count < cfg.min_coverage * cfg.expected_samples
    return BoutSummary(
        start_t=start_t,
        duration=cfg.bout_seconds,
        mean_enmo=mean,
        is_mvpa=(not dropout) and cfg.exceeds(mean),
        sample_count=count,
        dropout=dropout,
    )


def summarize_bout(samples: Sequence[AccelSample], cfg: TriggerConfig = TriggerConfig(),
                   start_t: float | None = None) -> BoutSummary:
    if len(samples) == 0:
        raise SignalError("cannot summarize an empty bout")
    total = 0.0
    for s in samples:
        total += compute_enmo(s)
    if start_t is None:
        start_t = samples[0].t
    return _make_bout(cfg, start_t, total, len(samples))


def detect_mvpa_epoch(recent_bouts: Sequence[BoutSummary], cfg: TriggerConfig = TriggerConfig()) -> EpochResult:
    """Decide MVPA over the trailing epoch made of the last ``bouts_per_epoch`` bouts."""
    need = cfg.bouts_per_epoch
    window = list(recent_bouts)[-need:]
    mvpa = sum(1 for b in window if b.is_mvpa)
    if len(window) < need:
        return EpochResult(False, False, mvpa)
    return EpochResult(mvpa * cfg.bout_seconds >= cfg.mvpa_required_seconds, True, mvpa)


class AccelTrace(NamedTuple):
    """Column-oriented accelerometer stream (all float64, equal length)."""

    t: np.ndarray
    ax: np.ndarray
    ay: np.ndarray
    az: np.ndarray

    def __len__(self):
        return len(self.t)

    @classmethod
    def from_samples(cls, samples: Iterable[AccelSample]) -> "AccelTrace":
        rows = [(s.t, s.ax, s.ay, s.az) for s in samples]
        arr = np.array(rows, dtype=np.float64).reshape(-1, 4)
        return cls(*(np.ascontiguousarray(arr[:, i]) for i in range(4)))

    @classmethod
    def coerce(cls, data) -> "AccelTrace":
        if isinstance(data, AccelTrace):
            return cls(*(np.ascontiguousarray(c, dtype=np.float64) for c in data))
        return cls.from_samples(data)

    def slice(self, start: int, stop: int) -> "AccelTrace":
        return AccelTrace(self.t[start:stop], self.ax[start:stop], self.ay[start:stop], self.az[start:stop])

    def samples(self):
        for row in zip(self.t.tolist(), self.ax.tolist(), self.ay.tolist(), self.az.tolist()):
            yield AccelSample(*row)


def validate_trace(trace: AccelTrace, after_t: float | None = None) -> None:
    n = len(trace)
    if n == 0:
        return
    for axis in (trace.ax, trace.ay, trace.az):
        peak = max(axis.max(), -axis.min())
        if not math.isfinite(peak):
            raise SignalError("trace contains non-finite values")
        if peak > FULL_SCALE_G:
            raise SignalError(f"acceleration exceeds the {FULL_SCALE_G:g} g full-scale range")
    # strictly increasing + finite endpoints implies every timestamp is finite
    if not (math.isfinite(trace.t[0]) and math.isfinite(trace.t[-1])):
        raise SignalError("trace contains non-finite values")
    if n > 1 and not (trace.t[1:] > trace.t[:-1]).all():
        raise SignalError("timestamps must be strictly increasing")
    if after_t is not None and trace.t[0] <= after_t:
        raise SignalError(f"timestamp {trace.t[0]} does not follow previous sample {after_t}")


class BoutOutcome(NamedTuple):
    bout: BoutSummary
    epoch: EpochResult
    triggered: bool


class MvpaStream:
    """Streaming bout/epoch evaluator aligned to a session start time.

    Bouts are closed by time: a bout ending at ``e`` is evaluated once the
    stream clock reaches ``e``. The clock advances to one sample period past
    each ingested sample, or explicitly via :meth:`advance`. Bouts that
    receive no samples are emitted as empty dropout bouts so the trailing
    window always spans real time.
    """

    def __init__(self, cfg: TriggerConfig = TriggerConfig(), start_t: float = 0.0):
        self.cfg = cfg
        self.start_t = float(start_t)
        self.clock = float(start_t)
        self.last_t: float | None = None
        self._next_bout = 0
        self._partial: tuple[int, float, int] | None = None
        self._window: deque[BoutSummary] = deque(maxlen=cfg.bouts_per_epoch)
        self._window_mvpa = 0
        self._was_mvpa = False
        self.triggers: list[float] = []

    def _bout_start(self, index: int) -> float:
        return self.start_t + index * self.cfg.bout_seconds

    def _emit(self, index: int, total: float, count: int, out: list) -> None:
        # fill any silent gap before this bout
        while self._next_bout < index:
            self._close(self._next_bout, 0.0, 0, out)
        self._close(index, total, count, out)

    def _close(self, index: int, total: float, count: int, out: list) -> None:
        cfg = self.cfg
        bout = _make_bout(cfg, self._bout_start(index), total, count)
        # running count; same result as detect_mvpa_epoch(self._window)
        if len(self._window) == self._window.maxlen and self._window[0].is_mvpa:
            self._window_mvpa -= 1
        self._window.append(bout)
        self._window_mvpa += bout.is_mvpa
        if len(self._window) < cfg.bouts_per_epoch:
            epoch = EpochResult(False, False, self._window_mvpa)
        else:
            epoch = EpochResult(self._window_mvpa * cfg.bout_seconds >= cfg.mvpa_required_seconds, True,
                                self._window_mvpa)
        triggered = epoch.is_mvpa and not self._was_mvpa
        self._was_mvpa = epoch.is_mvpa
        if triggered:
            self.triggers.append(bout.end_t)
        out.append(BoutOutcome(bout, epoch, triggered))
        self._next_bout = index + 1

    def feed(self, trace: AccelTrace) -> list[BoutOutcome]:
        trace = AccelTrace.coerce(trace)
        out: list[BoutOutcome] = []
        if len(trace) == 0:
            return out
        validate_trace(trace, self.last_t)
        if trace.t[0] < self.start_t:
            raise SignalError("sample precedes the session start")
        carry = self._partial if self._partial is not None else (-1, 0.0, 0)
        idx, sums, counts = kernels.bout_reduce(
            trace.t, trace.ax, trace.ay, trace.az, self.start_t, self.cfg.bout_seconds, *carry)
        if self._partial is not None and idx[0] != self._partial[0]:
            self._emit(*self._partial, out)
        idx_l, sums_l, counts_l = idx.tolist(), sums.tolist(), counts.tolist()
        for i in range(len(idx_l) - 1):
            self._emit(idx_l[i], sums_l[i], counts_l[i], out)
        self._partial = (idx_l[-1], sums_l[-1], counts_l[-1])
        self.last_t = float(trace.t[-1])
        out.extend(self.advance(self.last_t + 1.0 / self.cfg.sample_rate_hz))
        return out

    def advance(self, now: float) -> list[BoutOutcome]:
        """Move the clock to ``now`` and close every bout that has ended."""
        out: list[BoutOutcome] = []
        self.clock = max(self.clock, float(now))
        if self._partial is not None and self._bout_start(self._partial[0] + 1) <= self.clock:
            self._emit(*self._partial, out)
            self._partial = None
        pending = self._partial[0] if self._partial is not None else None
        while self._bout_start(self._next_bout + 1) <= self.clock and (pending is None or self._next_bout < pending):
            self._close(self._next_bout, 0.0, 0, out)
        return out

    def flush(self) -> list[BoutOutcome]:
        """Close the in-progress bout (end of session)."""
        out: list[BoutOutcome] = []
        if self._partial is not None:
            self._emit(*self._partial, out)
            self._partial = None
        return out


def batch_triggers(trace, cfg: TriggerConfig = TriggerConfig(), start_t: float | None = None,
                   end_t: float | None = None) -> list[float]:
    """Evaluate a whole trace at once; returns the edge-trigger times.

    Bouts up to ``end_t`` (default: one sample period after the last
    sample) are evaluated, matching what :class:`MvpaStream` produces.
    """
    trace = AccelTrace.coerce(trace)
    validate_trace(trace)
    if len(trace) == 0:
        return []
    if start_t is None:
        start_t = float(trace.t[0])
    if end_t is None:
        end_t = float(trace.t[-1]) + 1.0 / cfg.sample_rate_hz
    idx, sums, counts = kernels.bout_reduce(trace.t, trace.ax, trace.ay, trace.az,
                                            float(start_t), cfg.bout_seconds)
    n_bouts = 0
    while start_t + (n_bouts + 1) * cfg.bout_seconds <= end_t:
        n_bouts += 1
    all_sums = np.zeros(n_bouts)
    all_counts = np.zeros(n_bouts, dtype=np.int64)
    keep = idx < n_bouts
    all_sums[idx[keep]] = sums[keep]
    all_counts[idx[keep]] = counts[keep]
    means = np.divide(all_sums, all_counts, out=np.zeros(n_bouts), where=all_counts > 0)
    ok = all_counts >= cfg.min_coverage * cfg.expected_samples
    flags = (ok & (means > cfg.mvpa_threshold + cfg.compare_tolerance)).astype(np.uint8)
    counts_in_window = kernels.window_counts(flags, cfg.bouts_per_epoch)
    complete = np.arange(n_bouts) >= cfg.bouts_per_epoch - 1
    epoch = complete & (counts_in_window * cfg.bout_seconds >= cfg.mvpa_required_seconds)
    rising = epoch & ~np.r_[False, epoch[:-1]]
    return [start_t + (int(k) + 1) * cfg.bout_seconds for k in np.flatnonzero(rising)]
