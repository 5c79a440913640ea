"""Trace replay files (``t,ax,ay,az`` per line) and trigger reports."""
from __future__ import annotations

import numpy as np

from .core import AccelTrace, SignalError


def read_trace(path) -> AccelTrace:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise SignalError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise SignalError(f"{path}:{lineno}: {exc}") from None
    arr = np.array(rows, dtype=np.float64).reshape(-1, 4)
    return AccelTrace(*(np.ascontiguousarray(arr[:, i]) for i in range(4)))


def write_trace(path, trace: AccelTrace) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t, ax, ay, az in zip(trace.t.tolist(), trace.ax.tolist(), trace.ay.tolist(), trace.az.tolist()):
            fh.write(f"{t!r},{ax!r},{ay!r},{az!r}\n")


def write_triggers(path, triggers) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in triggers:
            fh.write(f"{t!r}\n")


def read_triggers(path) -> list[float]:
    with open(path, encoding="utf-8") as fh:
        return [float(line) for line in fh if line.strip()]
