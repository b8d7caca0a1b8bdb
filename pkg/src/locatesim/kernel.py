"""Deterministic discrete-event core: simulation clock, cancellable event queue, seeded draws."""

from __future__ import annotations

import heapq
import math
import random
from typing import Any, NamedTuple

# event kinds
TIMER = 0
DELIVERY = 1
LEG_END = 2
FREEZE_POLL = 3

_CANCELLED = -1


class Event(NamedTuple):
    time: float
    kind: int
    node: int
    data: Any


class EventQueue:
    """Min-heap of events ordered by (time, insertion sequence), with tombstone cancellation.

    Ties at equal time pop in insertion order, so a replay with the same
    schedule calls yields the same pop order.
    """

    __slots__ = ("_heap", "_seq", "now")

    def __init__(self) -> None:
        self._heap: list[list] = []
        self._seq = 0
        self.now = 0.0

    def schedule(self, time: float, kind: int, node: int, data: Any = None) -> list:
        """Insert an event and return its handle (accepted by cancel)."""
        if time < self.now:
            raise ValueError(f"cannot schedule event at t={time} before current t={self.now}")
        entry = [time, self._seq, kind, node, data]
        self._seq += 1
        heapq.heappush(self._heap, entry)
        return entry

    def cancel(self, handle: list) -> None:
        """Mark a pending event dead; it will be skipped on pop. Idempotent."""
        handle[2] = _CANCELLED

    def peek(self) -> float | None:
        """Time of the next live event without popping it, or None if drained."""
        heap = self._heap
        while heap and heap[0][2] == _CANCELLED:
            heapq.heappop(heap)
        return heap[0][0] if heap else None

    def pop(self) -> Event | None:
        """Remove and return the next live event, advancing the clock; None when empty."""
        heap = self._heap
        while heap:
            time, _seq, kind, node, data = heapq.heappop(heap)
            if kind != _CANCELLED:
                self.now = time
                return Event(time, kind, node, data)
        return None

    def __len__(self) -> int:
        return len(self._heap)


class RandomStream:
    """Seeded pseudo-random source; the draw sequence depends only on seed and call order."""

    __slots__ = ("seed", "_rng")

    def __init__(self, seed: int) -> None:
        self.seed = seed
        self._rng = random.Random(seed)

    def random(self) -> float:
        return self._rng.random()

    def uniform(self, lo: float, hi: float) -> float:
        """Draw from [lo, hi); returns lo when the interval is degenerate."""
        if not (lo <= hi):
            raise ValueError(f"uniform bounds out of order: [{lo}, {hi})")
        if lo == hi:
            return lo
        u = lo + (hi - lo) * self._rng.random()
        # guard the half-open upper bound against rounding
        return u if u < hi else math.nextafter(hi, lo)

    def bernoulli(self, p: float) -> bool:
        if not (0.0 <= p <= 1.0):
            raise ValueError(f"bernoulli probability {p} outside [0, 1]")
        return self._rng.random() < p

    def sample(self, population, k: int) -> list:
        return self._rng.sample(population, k)
