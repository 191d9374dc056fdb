"""Heartbeat-based service monitoring with historical availability.

A service is UP while the newest heartbeat is younger than three times its
declared interval, UNKNOWN until the first heartbeat arrives, DOWN otherwise.
Staleness transitions are recorded lazily, timestamped at the instant the
3T deadline passed (not at observation), so availability integrals come out
exact.  Also hosts the grid-wide progress event feed for operators.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

from .clock import Clock
from .errors import NotFoundError
from .events import EventBus

UP, DOWN, UNKNOWN = "UP", "DOWN", "UNKNOWN"


@dataclass
class ServiceStatus:
    service_id: str
    interval_ms: int
    last_heartbeat: int | None = None
    state: str = UNKNOWN
    history: list[tuple[int, str]] = field(default_factory=list)  # append-only

    def deadline(self) -> int | None:
        if self.last_heartbeat is None:
            return None
        return self.last_heartbeat + 3 * self.interval_ms


class MonitorService:
    def __init__(self, clock: Clock, events: EventBus | None = None,
                 default_interval_ms: int = 5000):
        self._clock = clock
        self.events = events
        self._default_interval = default_interval_ms
        self._services: dict[str, ServiceStatus] = {}
        self._lock = threading.Lock()

    def register_service(self, service_id: str, interval_ms: int | None = None) -> None:
        with self._lock:
            existing = self._services.get(service_id)
            if existing is None:
                self._services[service_id] = ServiceStatus(
                    service_id, interval_ms or self._default_interval)
            elif interval_ms:
                existing.interval_ms = interval_ms

    def services(self) -> list[str]:
        return sorted(self._services)

    def _sync(self, svc: ServiceStatus, now: int) -> None:
        """Record the lazy UP->DOWN transition at the instant staleness began."""
        if svc.state == UP and now >= svc.deadline():
            svc.state = DOWN
            svc.history.append((svc.deadline(), DOWN))

    def heartbeat(self, service_id: str, now_ms: int | None = None) -> None:
        now = self._now(now_ms)
        with self._lock:
            svc = self._services.get(service_id)
            if svc is None:
                raise NotFoundError(f"unknown service: {service_id}")
            self._sync(svc, now)
            svc.last_heartbeat = now
            if svc.state != UP:
                svc.state = UP
                svc.history.append((now, UP))

    def status(self, service_id: str, now_ms: int | None = None) -> str:
        now = self._now(now_ms)
        with self._lock:
            svc = self._services.get(service_id)
            if svc is None:
                return UNKNOWN
            self._sync(svc, now)
            return svc.state

    def availability(self, service_id: str, window_ms: int,
                     now_ms: int | None = None) -> float:
        """Fraction of the trailing window spent UP, from the transition history."""
        if window_ms <= 0:
            raise ValueError("window must be positive")
        now = self._now(now_ms)
        with self._lock:
            svc = self._services.get(service_id)
            if svc is None:
                return 0.0
            self._sync(svc, now)
            history = list(svc.history)
        window_start = now - window_ms
        up_time = 0
        for i, (t, state) in enumerate(history):
            if state != UP:
                continue
            end = history[i + 1][0] if i + 1 < len(history) else now
            up_time += max(0, min(end, now) - max(t, window_start))
        return up_time / window_ms

    def describe(self, service_id: str, now_ms: int | None = None) -> dict:
        now = self._now(now_ms)
        with self._lock:
            svc = self._services.get(service_id)
            if svc is None:
                return {"service_id": service_id, "state": UNKNOWN,
                        "last_heartbeat": None, "interval_ms": None}
            self._sync(svc, now)
            return {"service_id": service_id, "state": svc.state,
                    "last_heartbeat": svc.last_heartbeat,
                    "interval_ms": svc.interval_ms,
                    "history": [list(h) for h in svc.history]}

    def overview(self, now_ms: int | None = None) -> list[dict]:
        return [self.describe(sid, now_ms) for sid in self.services()]

    def recent_events(self, limit: int = 100) -> list[dict]:
        if self.events is None:
            return []
        return [e.to_dict() for e in self.events.snapshot()[-limit:]]

    def _now(self, now_ms: int | None) -> int:
        return self._clock.now_ms() if now_ms is None else now_ms
