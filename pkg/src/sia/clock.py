"""Time sources and timer scheduling.

Every timed behavior in the server (presence debounce, endpointing,
performance streaming, thinking deadlines) is expressed against the
``Scheduler`` interface so the same orchestration code runs under a
deterministic virtual clock in tests/simulation and under the asyncio
event loop in live deployments.
"""

from __future__ import annotations

import heapq
import itertools
from typing import Callable, Protocol


class Timer:
    """Cancelable handle for a scheduled callback."""

    __slots__ = ("at_ms", "fn", "cancelled")

    def __init__(self, at_ms: int, fn: Callable[[], None]) -> None:
        self.at_ms = at_ms
        self.fn = fn
        self.cancelled = False

    def cancel(self) -> None:
        self.cancelled = True


class Scheduler(Protocol):
    def now_ms(self) -> int: ...

    def call_at(self, at_ms: int, fn: Callable[[], None]) -> Timer: ...


class VirtualClock:
    """Discrete-event scheduler over integer milliseconds.

    Time only moves via :meth:`advance_to` / :meth:`run_until_idle`.
    Callbacks scheduled for the same instant fire in scheduling order,
    which makes whole-system runs reproducible byte for byte.
    """

    def __init__(self, start_ms: int = 0) -> None:
        self._now = start_ms
        self._seq = itertools.count()
        self._heap: list[tuple[int, int, Timer]] = []

    def now_ms(self) -> int:
        return self._now

    def call_at(self, at_ms: int, fn: Callable[[], None]) -> Timer:
        if at_ms < self._now:
            raise ValueError(f"cannot schedule in the past: {at_ms} < {self._now}")
        timer = Timer(at_ms, fn)
        heapq.heappush(self._heap, (at_ms, next(self._seq), timer))
        return timer

    def pending(self) -> int:
        """Number of live (non-cancelled) timers."""
        return sum(1 for _, _, t in self._heap if not t.cancelled)

    def advance_to(self, target_ms: int) -> None:
        """Fire all timers due at or before ``target_ms``, then set the clock."""
        while self._heap and self._heap[0][0] <= target_ms:
            at, _, timer = heapq.heappop(self._heap)
            if timer.cancelled:
                continue
            self._now = at
            timer.fn()
        if target_ms > self._now:
            self._now = target_ms

    def run_until_idle(self, limit_ms: int | None = None) -> None:
        """Drain the timer heap in order; stop at ``limit_ms`` if given."""
        while self._heap:
            at, _, timer = heapq.heappop(self._heap)
            if timer.cancelled:
                continue
            if limit_ms is not None and at > limit_ms:
                heapq.heappush(self._heap, (at, next(self._seq), timer))
                return
            self._now = at
            timer.fn()


class WallClock:
    """Scheduler adapter over a running asyncio event loop."""

    def __init__(self, loop) -> None:
        self._loop = loop
        self._origin = loop.time()

    def now_ms(self) -> int:
        return int((self._loop.time() - self._origin) * 1000)

    def call_at(self, at_ms: int, fn: Callable[[], None]) -> Timer:
        timer = Timer(at_ms, fn)

        def fire() -> None:
            if not timer.cancelled:
                timer.fn()

        delay = max(0.0, (at_ms - self.now_ms()) / 1000.0)
        self._loop.call_later(delay, fire)
        return timer
