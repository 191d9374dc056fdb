"""In-process event bus.

Storage sites, the data mover, and the virtual data service publish progress
events here; the monitor exposes the feed and tests assert over it (traces
are the observable record of concurrency, retries, and cache behaviour).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field


@dataclass(frozen=True)
class Event:
    t_ms: int
    source: str
    kind: str
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"t_ms": self.t_ms, "source": self.source, "kind": self.kind, **self.detail}


class EventBus:
    """Append-only, totally ordered event record."""

    def __init__(self):
        self._events: list[Event] = []
        self._lock = threading.Lock()

    def emit(self, t_ms: int, source: str, kind: str, **detail) -> Event:
        ev = Event(t_ms=t_ms, source=source, kind=kind, detail=detail)
        with self._lock:
            self._events.append(ev)
        return ev

    def __len__(self) -> int:
        with self._lock:
            return len(self._events)

    def snapshot(self) -> list[Event]:
        with self._lock:
            return list(self._events)

    def since(self, mark: int) -> list[Event]:
        """Events appended after a previous len() mark."""
        with self._lock:
            return self._events[mark:]

    def select(self, kind: str | None = None, source: str | None = None, **detail) -> list[Event]:
        out = []
        for ev in self.snapshot():
            if kind is not None and ev.kind != kind:
                continue
            if source is not None and ev.source != source:
                continue
            if any(ev.detail.get(k) != v for k, v in detail.items()):
                continue
            out.append(ev)
        return out

    def count(self, kind: str | None = None, source: str | None = None, **detail) -> int:
        return len(self.select(kind=kind, source=source, **detail))
