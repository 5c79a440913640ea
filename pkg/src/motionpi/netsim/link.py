"""A lossy in-process network between agents and the backend."""
from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from enum import Enum

from ..agent.transport import ConnectionRefused, ConnectionReset, RequestTimeout


class DropMode(str, Enum):
    REFUSE = "refuse_connection"
    TIMEOUT = "timeout"
    MID_BODY_CUT = "mid_body_cut"


@dataclass(frozen=True)
class Outage:
    start: float
    end: float
    mode: DropMode = DropMode.REFUSE


class OutageSchedule:
    """Disjoint, sorted ``[start, end)`` intervals during which all traffic fails."""

    def __init__(self, intervals=(), drop_mode: DropMode | str = DropMode.REFUSE):
        default = DropMode(drop_mode)
        out = []
        for iv in intervals:
            if isinstance(iv, Outage):
                out.append(iv)
            else:
                start, end, *rest = iv
                out.append(Outage(float(start), float(end), DropMode(rest[0]) if rest else default))
        for o in out:
            if not o.start < o.end:
                raise ValueError(f"outage [{o.start}, {o.end}) is empty or reversed")
        for a, b in zip(out, out[1:]):
            if b.start < a.end:
                raise ValueError("outage intervals must be sorted and disjoint")
        self.intervals = out
        self.drop_mode = default
        self._starts = [o.start for o in out]

    def at(self, t: float) -> Outage | None:
        i = bisect.bisect_right(self._starts, t) - 1
        if i >= 0 and t < self.intervals[i].end:
            return self.intervals[i]
        return None

    def overlapping(self, t0: float, t1: float) -> Outage | None:
        """First outage intersecting ``[t0, t1]``."""
        o = self.at(t0)
        if o:
            return o
        i = bisect.bisect_right(self._starts, t0)
        if i < len(self.intervals) and self.intervals[i].start <= t1:
            return self.intervals[i]
        return None

    @property
    def last_end(self) -> float | None:
        return self.intervals[-1].end if self.intervals else None

    @property
    def total_seconds(self) -> float:
        return sum(o.end - o.start for o in self.intervals)


@dataclass
class WireFrame:
    t: float
    method: str
    path: str
    outcome: str
    request: bytes
    response: bytes


@dataclass
class LinkStats:
    requests: int = 0
    delivered: int = 0
    refused: int = 0
    timeout: int = 0
    mid_body_cut: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class SimulatedLink:
    """Transport for :class:`~motionpi.agent.PhoneAgent` backed by a service object.

    A request is affected by an outage if any outage overlaps the interval
    ``[now, now + latency_s]``. Modes: ``refuse_connection`` never reaches
    the server; ``timeout`` reaches it but the response is lost;
    ``mid_body_cut`` delivers half the body and resets the connection.
    """
    service: object
    clock: object
    schedule: OutageSchedule = field(default_factory=OutageSchedule)
    latency_s: float = 0.05
    capture: bool = False
    frames: list[WireFrame] = field(default_factory=list)
    keep_uploads: bool = False
    uploads: list[tuple[str, dict, bytes]] = field(default_factory=list)
    stats: LinkStats = field(default_factory=LinkStats)

    def _deliver(self, method, path, headers, body):
        with self.clock.shifted(self.latency_s):
            return self.service.handle(method, path, headers, body)

    def request(self, method, path, headers, body=b""):
        t = self.clock.now()
        self.stats.requests += 1
        if self.keep_uploads and method == "POST" and path.startswith("/data/"):
            self.uploads.append((path, dict(headers), bytes(body)))
        outage = self.schedule.overlapping(t, t + self.latency_s)
        mode = outage.mode if outage else None
        resp = None
        if mode is None:
            resp = self._deliver(method, path, headers, body)
            self.stats.delivered += 1
            outcome = "ok"
        elif mode == DropMode.REFUSE:
            self.stats.refused += 1
            outcome = mode.value
        elif mode == DropMode.TIMEOUT:
            resp = self._deliver(method, path, headers, body)
            self.stats.timeout += 1
            outcome = mode.value
        else:
            if body:
                self._deliver(method, path, headers, body[:len(body) // 2])
            self.stats.mid_body_cut += 1
            outcome = mode.value
        if self.capture:
            self.frames.append(WireFrame(t, method, path, outcome, bytes(body),
                                         resp.body if resp is not None else b""))
        if mode is None:
            return resp
        if mode == DropMode.REFUSE:
            raise ConnectionRefused(f"connection refused at t={t:.3f}")
        if mode == DropMode.TIMEOUT:
            raise RequestTimeout(f"no response before timeout at t={t:.3f}")
        raise ConnectionReset(f"connection reset mid-body at t={t:.3f}")
