"""Synthetic wrist accelerometry driven by piecewise activity schedules.

Each state maps to a generator: gravity along a slowly drifting wrist
orientation, plus a sinusoidal movement component of amplitude ``amp`` g
at ``freq_hz`` along that axis, plus white noise of ``noise`` g per axis.
Noise is uniform with standard deviation ``noise`` (uniform draws are
several times cheaper than Gaussian ones). With gravity aligned to the
movement axis ENMO is close to ``max(amp*sin, 0)``, whose mean is
``amp/pi``:

==========  ======  =======  ======  ====================
state       amp     freq_hz  noise   approx. mean ENMO g
==========  ======  =======  ======  ====================
sedentary   0.0     0.0      0.010   0.004
walking     0.15    1.8      0.020   0.05
vigorous    0.55    2.4      0.030   0.18
==========  ======  =======  ======  ====================
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from datetime import time

import numpy as np

from ..signal import AccelTrace

STATES = ("sedentary", "walking", "vigorous")


@dataclass(frozen=True)
class StateModel:
    amp: float
    freq_hz: float
    noise: float


STATE_MODELS = {
    "sedentary": StateModel(0.0, 0.0, 0.010),
    "walking": StateModel(0.15, 1.8, 0.020),
    "vigorous": StateModel(0.55, 2.4, 0.030),
}

# probabilities for the "mixed" profile, drawn per 10-minute slot
MIXED_WEIGHTS = {"sedentary": 0.6, "walking": 0.25, "vigorous": 0.15}
MIXED_SLOT_S = 600.0


class ActivityProfile:
    """State as a function of seconds since local midnight; repeats daily."""

    def __init__(self, segments: list[tuple[float, str]]):
        if not segments:
            raise ValueError("an activity profile needs at least one segment")
        segs = sorted((float(s), st) for s, st in segments)
        for _, st in segs:
            if st not in STATES:
                raise ValueError(f"unknown activity state {st!r}")
        if segs[0][0] > 0:
            segs.insert(0, (0.0, segs[-1][1]))
        self.segments = segs
        self._starts = [s for s, _ in segs]

    def state_at(self, seconds_of_day: float) -> str:
        i = bisect.bisect_right(self._starts, seconds_of_day % 86400.0) - 1
        return self.segments[i][1]

    @classmethod
    def constant(cls, state: str) -> "ActivityProfile":
        return cls([(0.0, state)])

    @classmethod
    def mixed(cls, rng: np.random.Generator, weights: dict | None = None) -> "ActivityProfile":
        w = weights or MIXED_WEIGHTS
        names = list(w)
        p = np.array([w[n] for n in names], dtype=float)
        picks = rng.choice(len(names), size=int(86400 / MIXED_SLOT_S), p=p / p.sum())
        return cls([(k * MIXED_SLOT_S, names[i]) for k, i in enumerate(picks)])

    @classmethod
    def from_spec(cls, spec, rng: np.random.Generator) -> "ActivityProfile":
        """``spec`` is a state name, ``"mixed"``, or a list of ``{"start": "HH:MM", "state": ...}``."""
        if isinstance(spec, str):
            return cls.mixed(rng) if spec == "mixed" else cls.constant(spec)
        segs = []
        for seg in spec:
            tod = time.fromisoformat(seg["start"])
            segs.append((tod.hour * 3600 + tod.minute * 60 + tod.second, seg["state"]))
        return cls(segs)


class AccelGenerator:
    """Continuous per-band sample stream; phase and orientation persist across chunks."""

    def __init__(self, rng: np.random.Generator, rate_hz: float):
        self.rng = rng
        self.rate_hz = rate_hz
        self.phase = float(rng.uniform(0, 2 * math.pi))
        tilt = rng.normal(0.0, 0.15, 2)
        self.axis = np.array([tilt[0], tilt[1], 1.0]) / math.sqrt(1.0 + tilt @ tilt)

    def chunk(self, t0: float, n: int, state: str) -> AccelTrace:
        m = STATE_MODELS[state]
        k = np.arange(n, dtype=np.float64)
        t = t0 + k / self.rate_hz
        w = 2 * math.pi * m.freq_hz / self.rate_hz
        mag = 1.0 + m.amp * np.sin(self.phase + w * k) if m.amp else np.ones(n)
        self.phase = (self.phase + w * n) % (2 * math.pi)
        noise = self.rng.random((3, n))
        noise -= 0.5
        noise *= 2.0 * math.sqrt(3.0) * m.noise
        return AccelTrace(t, mag * self.axis[0] + noise[0], mag * self.axis[1] + noise[1],
                          mag * self.axis[2] + noise[2])
