"""Simulated multi-site hierarchical storage.

Each site has a capacity-bounded disk cache and an unbounded archive, with
real bytes kept under <root>/<site>/<tier>/<path>.  Space reservations,
staging (archive -> disk with modelled latency), checksummed transfers with
atomic visibility, and archive writes all draw failures from a per-site
seeded RNG, so every trace is reproducible.  Transient and permanent
failures are distinct exception types; retry loops live in the callers.
"""

from __future__ import annotations

import random
import threading
from dataclasses import dataclass
from pathlib import Path

from .clock import Clock
from .errors import (
    NotFoundError,
    PermanentError,
    TransientError,
    ValidationError,
)
from .events import EventBus
from .gridfmt import checksum
from .naming import Pfn, is_pfn, parse_pfn

MB = 1024 * 1024


class NoSpaceError(PermanentError):
    """Insufficient disk space even after evicting unpinned files."""

    code = "no_space"


class UnknownPathError(NotFoundError):
    code = "unknown_path"


class StageTransientFailure(TransientError):
    code = "stage_transient"


class TransientNetworkFailure(TransientError):
    code = "network_transient"


class ChecksumMismatch(TransientError):
    code = "checksum_mismatch"


@dataclass
class SiteConfig:
    site_id: str
    disk_capacity_bytes: int
    stage_base_ms: int = 100
    stage_per_mb_ms: int = 50
    p_transient: float = 0.0
    p_stage_fail: float = 0.0
    p_corrupt: float = 0.0  # in-flight corruption injection, off by default
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "SiteConfig":
        return cls(**{k: d[k] for k in (
            "site_id", "disk_capacity_bytes", "stage_base_ms", "stage_per_mb_ms",
            "p_transient", "p_stage_fail", "p_corrupt", "seed") if k in d})


@dataclass
class StoredFile:
    pfn: str
    size: int
    digest: str
    tier: str
    pinned: bool = False
    last_access: int = 0
    access_seq: int = 0


@dataclass
class SpaceReservation:
    reservation_id: str
    site_id: str
    bytes_total: int
    created_at: int
    consumed: int = 0
    released: bool = False

    def remaining(self) -> int:
        return max(self.bytes_total - self.consumed, 0)


class Site:
    def __init__(self, config: SiteConfig, root: Path):
        self.config = config
        self.root = root
        self.rng = random.Random(config.seed)
        self.files: dict[tuple[str, str], StoredFile] = {}  # (tier, path)
        self.reservations: dict[str, SpaceReservation] = {}
        self.lock = threading.RLock()
        self._seq = 0
        self._res_serial = 0
        for tier in ("disk", "archive"):
            (root / tier).mkdir(parents=True, exist_ok=True)

    def fs_path(self, tier: str, path: str) -> Path:
        return self.root / tier / path

    def next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def disk_used(self) -> int:
        return sum(f.size for (tier, _), f in self.files.items() if tier == "disk")

    def reserved(self) -> int:
        return sum(r.remaining() for r in self.reservations.values() if not r.released)

    def free(self) -> int:
        return self.config.disk_capacity_bytes - self.disk_used() - self.reserved()

    def rescan(self, now_ms: int) -> None:
        """Rebuild file metadata from bytes on disk (restart recovery)."""
        with self.lock:
            self.files.clear()
            for tier in ("disk", "archive"):
                base = self.root / tier
                for fs in sorted(p for p in base.rglob("*") if p.is_file()):
                    rel = fs.relative_to(base).as_posix()
                    data = fs.read_bytes()
                    self.files[(tier, rel)] = StoredFile(
                        pfn=f"site://{self.config.site_id}/{tier}/{rel}",
                        size=len(data), digest=checksum(data), tier=tier,
                        last_access=now_ms, access_seq=self.next_seq())


class StorageManager:
    """All sites of one deployment plus the transfer channels between them."""

    def __init__(self, root: Path, configs: list[SiteConfig], clock: Clock,
                 events: EventBus, rescan: bool = False):
        self.root = Path(root)
        self._clock = clock
        self.events = events
        self.sites: dict[str, Site] = {}
        for cfg in configs:
            site = Site(cfg, self.root / cfg.site_id)
            self.sites[cfg.site_id] = site
            if rescan:
                site.rescan(clock.now_ms())

    def site(self, site_id: str) -> Site:
        site = self.sites.get(site_id)
        if site is None:
            raise NotFoundError(f"unknown site: {site_id}")
        return site

    def add_site(self, config: SiteConfig) -> Site:
        site = Site(config, self.root / config.site_id)
        self.sites[config.site_id] = site
        return site

    # -- latency model -----------------------------------------------------

    def duration_ms(self, site_id: str, size: int) -> int:
        cfg = self.site(site_id).config
        return cfg.stage_base_ms + (size * cfg.stage_per_mb_ms) // MB

    # -- direct file plumbing ------------------------------------------------

    def write_file(self, pfn: str, data: bytes, pinned: bool = False,
                   now_ms: int | None = None) -> StoredFile:
        """Place bytes at a PFN directly (ingest path, no latency modelled)."""
        loc = parse_pfn(pfn)
        site = self.site(loc.site)
        now = self._now(now_ms)
        with site.lock:
            if loc.tier == "disk":
                self._ensure_disk_space(site, loc.path, len(data), now)
            return self._register(site, loc, data, pinned, now)

    def read_file(self, pfn: str, now_ms: int | None = None) -> bytes:
        loc = parse_pfn(pfn)
        site = self.site(loc.site)
        now = self._now(now_ms)
        with site.lock:
            meta = site.files.get((loc.tier, loc.path))
            if meta is None:
                raise UnknownPathError(f"no such file: {pfn}")
            meta.last_access = now
            meta.access_seq = site.next_seq()
            return site.fs_path(loc.tier, loc.path).read_bytes()

    def stat(self, pfn: str) -> StoredFile | None:
        loc = parse_pfn(pfn)
        site = self.site(loc.site)
        with site.lock:
            return site.files.get((loc.tier, loc.path))

    def exists(self, pfn: str) -> bool:
        return self.stat(pfn) is not None

    def list_dir(self, pfn_dir: str) -> list[str]:
        """Relative paths of files under a directory PFN, sorted."""
        loc = parse_pfn(pfn_dir)
        site = self.site(loc.site)
        prefix = loc.path.rstrip("/") + "/"
        with site.lock:
            return sorted(path[len(prefix):] for (tier, path) in site.files
                          if tier == loc.tier and path.startswith(prefix))

    def pin(self, pfn: str, pinned: bool = True) -> None:
        meta = self.stat(pfn)
        if meta is None:
            raise UnknownPathError(f"no such file: {pfn}")
        meta.pinned = pinned

    # -- space management ------------------------------------------------------

    def reserve_space(self, site_id: str, nbytes: int,
                      now_ms: int | None = None) -> SpaceReservation:
        """Reserve disk-cache space, evicting LRU unpinned files on shortfall."""
        if nbytes <= 0:
            raise ValidationError("reservation must be positive")
        site = self.site(site_id)
        now = self._now(now_ms)
        with site.lock:
            self._evict_until(site, nbytes, now)
            if site.free() < nbytes:
                raise NoSpaceError(
                    f"{site_id}: cannot reserve {nbytes} bytes (free {site.free()})")
            site._res_serial += 1
            res = SpaceReservation(
                reservation_id=f"{site_id}-res-{site._res_serial:05d}",
                site_id=site_id, bytes_total=nbytes, created_at=now)
            site.reservations[res.reservation_id] = res
            self.events.emit(now, f"storage:{site_id}", "reserve",
                             reservation=res.reservation_id, bytes=nbytes)
            return res

    def release_reservation(self, reservation: SpaceReservation,
                            now_ms: int | None = None) -> None:
        site = self.site(reservation.site_id)
        with site.lock:
            if not reservation.released:
                reservation.released = True
                site.reservations.pop(reservation.reservation_id, None)
                self.events.emit(self._now(now_ms), f"storage:{reservation.site_id}",
                                 "release", reservation=reservation.reservation_id)

    def _evict_until(self, site: Site, needed: int, now: int) -> None:
        while site.free() < needed:
            victims = [f for (tier, _), f in site.files.items()
                       if tier == "disk" and not f.pinned]
            if not victims:
                return
            victim = min(victims, key=lambda f: (f.last_access, f.access_seq))
            loc = parse_pfn(victim.pfn)
            del site.files[("disk", loc.path)]
            fs = site.fs_path("disk", loc.path)
            if fs.exists():
                fs.unlink()
            self.events.emit(now, f"storage:{site.config.site_id}", "evicted",
                             path=loc.path, bytes=victim.size)

    def _ensure_disk_space(self, site: Site, path: str, size: int, now: int) -> None:
        existing = site.files.get(("disk", path))
        already = existing.size if existing else 0
        needed = size - already
        if needed <= 0:
            return
        self._evict_until(site, needed, now)
        if site.free() < needed:
            raise NoSpaceError(
                f"{site.config.site_id}: no space for {size} bytes at {path!r}")

    # -- tier movement -----------------------------------------------------------

    def stage(self, site_id: str, archive_path: str, reservation: SpaceReservation,
              now_ms: int | None = None) -> StoredFile:
        """Copy archive -> disk after modelled latency, consuming the reservation."""
        site = self.site(site_id)
        now = self._now(now_ms)
        with site.lock:
            meta = site.files.get(("archive", archive_path))
            if meta is None:
                raise UnknownPathError(f"no archive file {archive_path!r} at {site_id}")
            duration = self.duration_ms(site_id, meta.size)
            self.events.emit(now, f"storage:{site_id}", "stage_start",
                             path=archive_path, bytes=meta.size)
            if site.rng.random() < site.config.p_stage_fail:
                self.events.emit(now + duration, f"storage:{site_id}", "stage_failed",
                                 path=archive_path)
                raise StageTransientFailure(
                    f"stage of {archive_path!r} failed at {site_id}",
                    duration_ms=duration)
            existing = site.files.get(("disk", archive_path))
            if existing is not None and existing.digest == meta.digest:
                staged = existing
            else:
                if reservation.released or reservation.site_id != site_id:
                    raise ValidationError("reservation not usable at this site")
                if reservation.remaining() < meta.size:
                    raise NoSpaceError("reservation does not cover file size")
                data = site.fs_path("archive", archive_path).read_bytes()
                reservation.consumed += meta.size
                staged = self._register(site, Pfn(site_id, "disk", archive_path),
                                        data, False, now + duration)
            self.events.emit(now + duration, f"storage:{site_id}", "staged",
                             path=archive_path, bytes=meta.size, digest=staged.digest)
            return staged

    def transfer(self, src_pfn: str, dst: str, expected_digest: str | None = None,
                 now_ms: int | None = None) -> dict:
        """Move bytes between sites (or to a local path) with digest verification.

        The destination becomes visible atomically: bytes land under a
        temporary name and are renamed only after the digest checks out, so
        injected failures never leave a partial or corrupt file observable.
        """
        src = parse_pfn(src_pfn)
        src_site = self.site(src.site)
        now = self._now(now_ms)
        dst_is_site = is_pfn(dst)
        dst_loc = parse_pfn(dst) if dst_is_site else None
        cross_site = not dst_is_site or dst_loc.site != src.site

        with src_site.lock:
            meta = src_site.files.get((src.tier, src.path))
            if meta is None:
                raise UnknownPathError(f"no such file: {src_pfn}")
            if cross_site and src.tier != "disk":
                raise ValidationError(
                    f"cross-site transfer requires a disk-resident source: {src_pfn}")
            data = src_site.fs_path(src.tier, src.path).read_bytes()
            meta.last_access = now
            meta.access_seq = src_site.next_seq()
            duration = self.duration_ms(src.site, meta.size)
            self.events.emit(now, f"storage:{src.site}", "transfer_start",
                             src=src_pfn, dst=dst, bytes=meta.size)
            if src_site.rng.random() < src_site.config.p_transient:
                self.events.emit(now + duration, f"storage:{src.site}", "transfer_failed",
                                 src=src_pfn, dst=dst, error="network")
                raise TransientNetworkFailure(
                    f"transfer {src_pfn} -> {dst} failed", duration_ms=duration)
            corrupted = src_site.rng.random() < src_site.config.p_corrupt

        sent = bytes([data[0] ^ 0xFF]) + data[1:] if corrupted and data else data
        want = expected_digest or meta.digest
        got = checksum(sent)
        if got != want:
            self.events.emit(now + duration, f"storage:{src.site}", "transfer_failed",
                             src=src_pfn, dst=dst, error="checksum")
            raise ChecksumMismatch(
                f"digest mismatch transferring {src_pfn}", duration_ms=duration)

        if dst_is_site:
            dst_site = self.site(dst_loc.site)
            with dst_site.lock:
                if dst_loc.tier == "disk":
                    self._ensure_disk_space(dst_site, dst_loc.path, len(sent), now)
                self._register(dst_site, dst_loc, sent, False, now + duration)
        else:
            target = Path(dst)
            target.parent.mkdir(parents=True, exist_ok=True)
            tmp = target.with_name(target.name + ".part")
            tmp.write_bytes(sent)
            tmp.rename(target)

        self.events.emit(now + duration, f"storage:{src.site}", "transfer_done",
                         src=src_pfn, dst=dst, bytes=len(sent), digest=got)
        return {"bytes": len(sent), "digest": got, "duration_ms": duration, "dst": dst}

    def archive_put(self, site_id: str, disk_path: str,
                    now_ms: int | None = None) -> StoredFile:
        """Copy disk -> archive; the disk copy remains resident."""
        site = self.site(site_id)
        now = self._now(now_ms)
        with site.lock:
            meta = site.files.get(("disk", disk_path))
            if meta is None:
                raise UnknownPathError(f"no disk file {disk_path!r} at {site_id}")
            duration = self.duration_ms(site_id, meta.size)
            self.events.emit(now, f"storage:{site_id}", "archive_start",
                             path=disk_path, bytes=meta.size)
            if site.rng.random() < site.config.p_stage_fail:
                self.events.emit(now + duration, f"storage:{site_id}", "archive_failed",
                                 path=disk_path)
                raise StageTransientFailure(
                    f"archive of {disk_path!r} failed at {site_id}",
                    duration_ms=duration)
            data = site.fs_path("disk", disk_path).read_bytes()
            stored = self._register(site, Pfn(site_id, "archive", disk_path),
                                    data, False, now + duration)
            self.events.emit(now + duration, f"storage:{site_id}", "archived",
                             path=disk_path, digest=stored.digest)
            return stored

    # -- internals ------------------------------------------------------------

    def _register(self, site: Site, loc: Pfn, data: bytes, pinned: bool,
                  now: int) -> StoredFile:
        """Atomic write + metadata registration; emits disk_write for disk tier."""
        fs = site.fs_path(loc.tier, loc.path)
        fs.parent.mkdir(parents=True, exist_ok=True)
        tmp = fs.with_name(fs.name + ".part")
        tmp.write_bytes(data)
        tmp.rename(fs)
        meta = StoredFile(
            pfn=str(loc), size=len(data), digest=checksum(data), tier=loc.tier,
            pinned=pinned, last_access=now, access_seq=site.next_seq())
        site.files[(loc.tier, loc.path)] = meta
        if loc.tier == "disk":
            self.events.emit(now, f"storage:{site.config.site_id}", "disk_write",
                             site=site.config.site_id, path=loc.path, bytes=len(data))
        return meta

    def _now(self, now_ms: int | None) -> int:
        return self._clock.now_ms() if now_ms is None else now_ms

    def usage(self, site_id: str) -> dict:
        site = self.site(site_id)
        with site.lock:
            return {
                "capacity": site.config.disk_capacity_bytes,
                "used": site.disk_used(),
                "reserved": site.reserved(),
                "free": site.free(),
            }
