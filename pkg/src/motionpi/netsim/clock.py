"""Virtual time and a totally ordered event queue."""
from __future__ import annotations

import heapq
import itertools
from contextlib import contextmanager
from typing import Callable


class VirtualClock:
    """The only time source in a simulation. Moves forward only."""

    def __init__(self, t: float = 0.0):
        self._t = float(t)
        self._shift = 0.0

    def now(self) -> float:
        return self._t + self._shift

    __call__ = now

    def advance_to(self, t: float) -> None:
        if t < self._t:
            raise ValueError(f"virtual clock cannot move back from {self._t} to {t}")
        self._t = float(t)

    @contextmanager
    def shifted(self, dt: float):
        """Temporarily read ``dt`` seconds ahead (used for link latency)."""
        self._shift += dt
        try:
            yield
        finally:
            self._shift -= dt


class EventQueue:
    """Events ordered by (time, participant index, insertion sequence)."""

    def __init__(self):
        self._heap: list = []
        self._seq = itertools.count()

    def __len__(self) -> int:
        return len(self._heap)

    def push(self, t: float, owner: int, action: Callable[[float], None]) -> None:
        heapq.heappush(self._heap, (float(t), owner, next(self._seq), action))

    def pop(self):
        t, owner, _, action = heapq.heappop(self._heap)
        return t, owner, action

    def peek_time(self) -> float | None:
        return self._heap[0][0] if self._heap else None

    def run(self, clock: VirtualClock, until: float | None = None) -> int:
        n = 0
        while self._heap and (until is None or self._heap[0][0] <= until):
            t, _, action = self.pop()
            clock.advance_to(t)
            action(t)
            n += 1
        return n
