"""Replica location service: soft-state LFN -> PFN mappings.

Entries expire unless renewed (re-adding the same pair renews it), so data
can move between sites without catalog edits going stale.  Lookups prefer
disk-tier copies over archive-tier ones because staging is the expensive
step.  Expiry is evaluated lazily at read time.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path

from .clock import Clock, MS_PER_HOUR
from .errors import NotFoundError
from .naming import parse_pfn, validate_lfn

DEFAULT_TTL_MS = 24 * MS_PER_HOUR


@dataclass
class ReplicaEntry:
    lfn: str
    pfn: str
    registered_at: int
    renewed_at: int
    ttl_ms: int

    def expired(self, now_ms: int) -> bool:
        return now_ms - self.renewed_at >= self.ttl_ms

    def to_dict(self) -> dict:
        return {"lfn": self.lfn, "pfn": self.pfn, "registered_at": self.registered_at,
                "renewed_at": self.renewed_at, "ttl_ms": self.ttl_ms}


class ReplicaService:
    def __init__(self, clock: Clock, security, log_path: Path | None = None,
                 default_ttl_ms: int = DEFAULT_TTL_MS):
        self._clock = clock
        self._security = security
        self._log_path = Path(log_path) if log_path else None
        self._default_ttl = default_ttl_ms
        self._lock = threading.Lock()
        self._entries: dict[tuple[str, str], ReplicaEntry] = {}
        if self._log_path and self._log_path.exists():
            self._replay()

    def _replay(self) -> None:
        with open(self._log_path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                event = json.loads(line)
                key = (event["lfn"], event["pfn"])
                if event["op"] == "add":
                    self._entries[key] = ReplicaEntry(
                        lfn=event["lfn"], pfn=event["pfn"],
                        registered_at=event["registered_at"],
                        renewed_at=event["renewed_at"], ttl_ms=event["ttl_ms"])
                elif event["op"] == "remove":
                    self._entries.pop(key, None)

    def _append(self, op: str, entry: ReplicaEntry) -> None:
        if self._log_path is None:
            return
        self._log_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self._log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps({"op": op, **entry.to_dict()}) + "\n")

    def add_replica(self, lfn: str, pfn: str, token: str,
                    ttl_ms: int | None = None) -> ReplicaEntry:
        """Register (or renew) a physical location for a logical name."""
        validate_lfn(lfn)
        parse_pfn(pfn)
        self._security.check(token, lfn, "publish")
        now = self._clock.now_ms()
        with self._lock:
            existing = self._entries.get((lfn, pfn))
            if existing is not None and not existing.expired(now):
                existing.renewed_at = now
                entry = existing
            else:
                entry = ReplicaEntry(lfn=lfn, pfn=pfn, registered_at=now,
                                     renewed_at=now,
                                     ttl_ms=ttl_ms or self._default_ttl)
                self._entries[(lfn, pfn)] = entry
            self._append("add", entry)
            return entry

    def lookup(self, lfn: str) -> list[str]:
        """Unexpired PFNs for an LFN, disk tier before archive tier."""
        now = self._clock.now_ms()
        with self._lock:
            live = [e for (l, _), e in self._entries.items()
                    if l == lfn and not e.expired(now)]
        tier_rank = {"disk": 0, "archive": 1}
        return [e.pfn for e in sorted(
            live, key=lambda e: (tier_rank[parse_pfn(e.pfn).tier], e.pfn))]

    def remove_replica(self, lfn: str, pfn: str, token: str) -> None:
        self._security.check(token, lfn, "publish")
        now = self._clock.now_ms()
        with self._lock:
            entry = self._entries.get((lfn, pfn))
            if entry is None or entry.expired(now):
                raise NotFoundError(f"no replica ({lfn}, {pfn})")
            del self._entries[(lfn, pfn)]
            self._append("remove", entry)
