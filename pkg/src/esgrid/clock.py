"""Injectable clocks.

All timing-sensitive logic (replica TTLs, token expiry, heartbeat staleness,
transfer latency accounting) reads time through a Clock instance instead of
the wall clock, so tests and the transfer scheduler can run on virtual time.
"""

from __future__ import annotations

import threading
import time

MS_PER_SECOND = 1000
MS_PER_HOUR = 3_600_000


class Clock:
    """Interface: milliseconds since an arbitrary epoch."""

    def now_ms(self) -> int:
        raise NotImplementedError

    def advance(self, delta_ms: int) -> None:
        """Move time forward; no-op on real clocks."""

    def advance_to(self, t_ms: int) -> None:
        """Move time forward to an absolute instant; never moves backward."""


class SimClock(Clock):
    """Deterministic virtual clock, starts at 0 unless told otherwise."""

    def __init__(self, start_ms: int = 0):
        self._now = start_ms
        self._lock = threading.Lock()

    def now_ms(self) -> int:
        with self._lock:
            return self._now

    def advance(self, delta_ms: int) -> None:
        if delta_ms < 0:
            raise ValueError("clock cannot move backward")
        with self._lock:
            self._now += delta_ms

    def advance_to(self, t_ms: int) -> None:
        with self._lock:
            if t_ms > self._now:
                self._now = t_ms


class WallClock(Clock):
    """Real time, for live deployments."""

    def now_ms(self) -> int:
        return int(time.time() * 1000)

    def advance(self, delta_ms: int) -> None:
        pass

    def advance_to(self, t_ms: int) -> None:
        pass
