"""Robust directory replication and client fetch modes.

A transfer request is planned (recursive enumeration, destination skeleton
journaled first), then executed by a virtual-time scheduler that drives each
file through stage -> transfer -> archive with bounded concurrency, retrying
transient failures with exponential backoff and journaling every state
change before acting on it.  The journal alone reconstructs job state, so a
crashed coordinator resumes without re-transferring completed files: every
step is skipped when its output already exists with the source digest.

Fetch modes mirror the two user classes: casual fetches materialize files
into the portal's disk cache for later pull; frequent fetches move bytes
straight from the source site to the caller's directory, bypassing the
portal cache entirely.
"""

from __future__ import annotations

import heapq
import json
import random
import uuid
import zlib
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

from .clock import Clock
from .errors import (
    AuthorizationDenied,
    EsgError,
    NotFoundError,
    PermanentError,
    TransientError,
    ValidationError,
)
from .events import EventBus
from .gridfmt import checksum
from .naming import Pfn, is_pfn, parse_pfn
from .replica import ReplicaService
from .security import SecurityService
from .storage import StorageManager

# job lifecycle; the *ING states are the ones that occupy a concurrency slot
PENDING, STAGING, STAGED = "PENDING", "STAGING", "STAGED"
TRANSFERRING, TRANSFERRED = "TRANSFERRING", "TRANSFERRED"
ARCHIVING, DONE, FAILED = "ARCHIVING", "DONE", "FAILED"
ACTIVE_STATES = (STAGING, TRANSFERRING, ARCHIVING)

PLANNED, RUNNING, COMPLETED = "PLANNED", "RUNNING", "COMPLETED"
PARTIAL_FAILED, RESUMABLE = "PARTIAL_FAILED", "RESUMABLE"

_ACTIVE_FOR = {"stage": STAGING, "transfer": TRANSFERRING, "archive": ARCHIVING}
_AFTER = {"stage": STAGED, "transfer": TRANSFERRED, "archive": TRANSFERRED}


class CoordinatorCrash(EsgError):
    """Injected coordinator death (testing hook for crash-resume)."""

    code = "coordinator_crash"


@dataclass
class TransferPolicy:
    max_concurrent_files: int = 4
    max_retries: int = 8
    backoff_base_ms: int = 100
    backoff_factor: float = 2.0
    jitter_seed: int | None = None

    def to_dict(self) -> dict:
        return {
            "max_concurrent_files": self.max_concurrent_files,
            "max_retries": self.max_retries,
            "backoff_base_ms": self.backoff_base_ms,
            "backoff_factor": self.backoff_factor,
            "jitter_seed": self.jitter_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TransferPolicy":
        return cls(**d)


@dataclass
class FileJob:
    path: str  # relative to the request's src/dst directories
    size: int
    state: str = PENDING
    attempts: int = 0
    last_error: str | None = None
    digest: str | None = None
    fresh_try: bool = True

    def outcome(self) -> dict:
        return {"path": self.path, "state": self.state, "bytes": self.size,
                "attempts": self.attempts, "error": self.last_error,
                "digest": self.digest}


@dataclass
class TransferRequest:
    request_id: str
    src: str
    dst: str
    policy: TransferPolicy
    state: str = PLANNED


@dataclass
class Report:
    request_id: str
    state: str
    files: list[dict] = field(default_factory=list)
    elapsed_ms: int = 0

    @property
    def done(self) -> int:
        return sum(1 for f in self.files if f["state"] == DONE)

    @property
    def failed(self) -> int:
        return sum(1 for f in self.files if f["state"] == FAILED)

    def to_dict(self) -> dict:
        return {"request_id": self.request_id, "state": self.state,
                "done": self.done, "failed": self.failed,
                "elapsed_ms": self.elapsed_ms, "files": list(self.files)}


class DataMoverService:
    def __init__(self, storage: StorageManager, security: SecurityService,
                 replica: ReplicaService, clock: Clock, events: EventBus,
                 journals_dir: Path, portal_cache_site: str,
                 service_token: str | None = None):
        self._storage = storage
        self._security = security
        self._replica = replica
        self._clock = clock
        self._events = events
        self._journals = Path(journals_dir)
        self._journals.mkdir(parents=True, exist_ok=True)
        self._cache_site = portal_cache_site
        self._service_token = service_token
        self._requests: dict[str, tuple[TransferRequest, dict[str, FileJob]]] = {}

    # -- journal -----------------------------------------------------------

    def _journal_path(self, request_id: str) -> Path:
        return self._journals / f"{request_id}.log"

    def _append(self, request_id: str, entry: dict) -> None:
        with open(self._journal_path(request_id), "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry) + "\n")

    def _journal_job(self, request_id: str, job: FileJob, t_ms: int) -> None:
        entry = {"type": "job", "path": job.path, "state": job.state,
                 "attempt": job.attempts, "t_ms": t_ms, "size": job.size}
        if job.digest:
            entry["digest"] = job.digest
        if job.last_error:
            entry["error"] = job.last_error
        self._append(request_id, entry)
        self._events.emit(t_ms, "datamover", "job_state",
                          request=request_id, path=job.path, state=job.state,
                          attempt=job.attempts)

    def _journal_request(self, request: TransferRequest, t_ms: int) -> None:
        self._append(request.request_id, {
            "type": "request", "request_id": request.request_id,
            "src": request.src, "dst": request.dst,
            "policy": request.policy.to_dict(), "state": request.state,
            "t_ms": t_ms})
        self._events.emit(t_ms, "datamover", "request_state",
                          request=request.request_id, state=request.state)

    def journal_entries(self, request_id: str) -> list[dict]:
        return self._read_journal(request_id)

    # -- planning -----------------------------------------------------------

    def plan(self, src: str, dst: str, token: str,
             policy: TransferPolicy | None = None) -> TransferRequest:
        """Enumerate a source directory into file jobs; authorization first."""
        self._security.check(token, "svc://datamover", "move")
        src_loc = parse_pfn(src)
        paths = self._storage.list_dir(src)
        if not paths:
            site = self._storage.site(src_loc.site)
            if not site.fs_path(src_loc.tier, src_loc.path).is_dir():
                raise NotFoundError(f"unknown source directory: {src}")
        request = TransferRequest(
            request_id=f"mv-{uuid.uuid4().hex[:10]}",
            src=src.rstrip("/"), dst=dst.rstrip("/"),
            policy=policy or TransferPolicy(),
        )
        now = self._clock.now_ms()
        self._journal_request(request, now)
        # destination skeleton first (root included), then one entry per file
        skeleton = {"."} | {str(Path(p).parent) for p in paths} if paths else set()
        for d in sorted(skeleton):
            self._append(request.request_id, {"type": "mkdir", "path": d, "t_ms": now})
        jobs: dict[str, FileJob] = {}
        for rel in paths:
            meta = self._storage.stat(f"{request.src}/{rel}")
            job = FileJob(path=rel, size=meta.size if meta else 0)
            jobs[rel] = job
            self._journal_job(request.request_id, job, now)
        self._requests[request.request_id] = (request, jobs)
        return request

    def jobs(self, request_id: str) -> list[FileJob]:
        return [self._load(request_id)[1][p] for p in sorted(self._load(request_id)[1])]

    def mkdir_entries(self, request_id: str) -> list[str]:
        return [e["path"] for e in self._read_journal(request_id) if e["type"] == "mkdir"]

    # -- replay -------------------------------------------------------------

    def _read_journal(self, request_id: str) -> list[dict]:
        path = self._journal_path(request_id)
        if not path.exists():
            raise NotFoundError(f"unknown request: {request_id}")
        entries = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    entries.append(json.loads(line))
        return entries

    def _load(self, request_id: str) -> tuple[TransferRequest, dict[str, FileJob]]:
        if request_id in self._requests:
            return self._requests[request_id]
        return self._replay(request_id)

    def _replay(self, request_id: str) -> tuple[TransferRequest, dict[str, FileJob]]:
        """Rebuild request and job states from the journal alone."""
        entries = self._read_journal(request_id)
        request: TransferRequest | None = None
        jobs: dict[str, FileJob] = {}
        for entry in entries:
            if entry["type"] == "request":
                if request is None:
                    request = TransferRequest(
                        request_id=entry["request_id"], src=entry["src"],
                        dst=entry["dst"],
                        policy=TransferPolicy.from_dict(entry["policy"]),
                        state=entry["state"])
                else:
                    request.state = entry["state"]
            elif entry["type"] == "job":
                job = jobs.get(entry["path"])
                if job is None:
                    job = FileJob(path=entry["path"], size=entry.get("size", 0))
                    jobs[entry["path"]] = job
                job.state = entry["state"]
                job.attempts = entry.get("attempt", job.attempts)
                job.size = entry.get("size", job.size)
                job.digest = entry.get("digest", job.digest)
                job.last_error = entry.get("error", job.last_error)
        if request is None:
            raise ValidationError(f"journal for {request_id} has no request entry")
        # normalize mid-operation states back to their last stable state
        steps = self._steps(request)
        for job in jobs.values():
            if job.state == STAGING:
                job.state = PENDING
            elif job.state == TRANSFERRING:
                job.state = STAGED if "stage" in steps else PENDING
            elif job.state == ARCHIVING:
                job.state = TRANSFERRED
            job.fresh_try = True
        if request.state == RUNNING:
            request.state = RESUMABLE
        self._requests[request_id] = (request, jobs)
        return request, jobs

    # -- execution ------------------------------------------------------------

    @staticmethod
    def _steps(request: TransferRequest) -> list[str]:
        steps = []
        if parse_pfn(request.src).tier == "archive":
            steps.append("stage")
        steps.append("transfer")
        if is_pfn(request.dst) and parse_pfn(request.dst).tier == "archive":
            steps.append("archive")
        return steps

    def _final_dst(self, request: TransferRequest, rel: str) -> str:
        if is_pfn(request.dst):
            return f"{request.dst}/{rel}"
        return str(Path(request.dst) / rel)

    def _transfer_target(self, request: TransferRequest, rel: str) -> str:
        """Cross-site transfers land on the destination disk tier first."""
        if not is_pfn(request.dst):
            return str(Path(request.dst) / rel)
        loc = parse_pfn(request.dst)
        return f"site://{loc.site}/disk/{loc.path}/{rel}"

    def execute(self, request_id: str, crash_after_done: int | None = None) -> Report:
        request, jobs = self._load(request_id)
        if request.state == COMPLETED:
            return self._report(request, jobs, 0)
        if request.state not in (PLANNED, RESUMABLE, PARTIAL_FAILED):
            raise ValidationError(f"request {request_id} is {request.state}, not runnable")
        return _Runner(self, request, jobs, crash_after_done).run()

    def resume(self, request_id: str) -> Report:
        """Continue after a crash; resuming a completed request is a no-op."""
        request, jobs = self._replay(request_id)
        if request.state == COMPLETED:
            return self._report(request, jobs, 0)
        return self.execute(request_id)

    def status(self, request_id: str) -> dict:
        request, jobs = self._load(request_id)
        return {
            "request_id": request.request_id, "src": request.src, "dst": request.dst,
            "state": request.state,
            "files": [jobs[p].outcome() for p in sorted(jobs)],
        }

    def _report(self, request: TransferRequest, jobs: dict[str, FileJob],
                elapsed: int) -> Report:
        return Report(
            request_id=request.request_id, state=request.state,
            files=[jobs[p].outcome() for p in sorted(jobs)],
            elapsed_ms=elapsed)

    # -- DataMover-Lite fetch modes ------------------------------------------

    def cache_pfn(self, lfn: str) -> str:
        return f"site://{self._cache_site}/disk/fetch/{lfn[len('lfn://'):]}"

    def fetch_lite(self, lfns: list[str], mode: str, dest_dir: str | None,
                   token: str, policy: TransferPolicy | None = None) -> Report:
        """Casual: materialize into the portal cache for pull; frequent: direct."""
        if mode not in ("casual", "frequent"):
            raise ValidationError(f"unknown fetch mode: {mode!r}")
        if self._security.peek(token) is None:
            raise AuthorizationDenied("invalid token")
        if mode == "frequent":
            if not dest_dir:
                raise ValidationError("frequent mode requires a destination directory")
            self._security.check(token, "svc://datamover", "move")
        for lfn in lfns:
            self._security.check(token, lfn, "read")

        policy = policy or TransferPolicy()
        rng = random.Random(policy.jitter_seed if policy.jitter_seed is not None else 0)
        report = Report(request_id=f"fetch-{uuid.uuid4().hex[:8]}", state=RUNNING)
        now = self._clock.now_ms()
        for lfn in lfns:
            entry = {"path": lfn, "state": FAILED, "bytes": 0, "attempts": 0,
                     "error": None, "digest": None, "result": None}
            report.files.append(entry)
            try:
                now = self._fetch_one(lfn, mode, dest_dir, entry, policy, rng, now)
            except (PermanentError, ValidationError) as exc:
                entry["error"] = exc.message
            except TransientError as exc:
                entry["error"] = f"retries exhausted: {exc.message}"
        self._clock.advance_to(now)
        report.state = COMPLETED if all(f["state"] == DONE for f in report.files) \
            else PARTIAL_FAILED
        return report

    def _fetch_one(self, lfn: str, mode: str, dest_dir: str | None, entry: dict,
                   policy: TransferPolicy, rng: random.Random, now: int) -> int:
        replicas = self._replica.lookup(lfn)
        if not replicas:
            raise NotFoundError(f"no replicas registered for {lfn}")
        src = parse_pfn(replicas[0])
        source_meta = self._storage.stat(replicas[0])
        if source_meta is None:
            raise NotFoundError(f"replica {replicas[0]} has no bytes")
        if mode == "casual":
            target = self.cache_pfn(lfn)
            cached = self._storage.stat(target)
            if cached and cached.digest == source_meta.digest:
                entry.update(state=DONE, bytes=cached.size, digest=cached.digest,
                             attempts=0, result=target)
                return now
        else:
            target = str(Path(dest_dir) / lfn.rsplit("/", 1)[-1])

        for attempt in range(1, policy.max_retries + 2):
            entry["attempts"] = attempt
            try:
                disk_src = self._ensure_disk_copy(src, source_meta, now)
                result = self._storage.transfer(str(disk_src), target, now_ms=now)
                now += result["duration_ms"]
                entry.update(state=DONE, bytes=result["bytes"],
                             digest=result["digest"], result=target)
                if mode == "casual" and self._service_token:
                    self._replica.add_replica(lfn, target, self._service_token)
                return now
            except TransientError as exc:
                now += int(exc.details.get("duration_ms", 0))
                if attempt > policy.max_retries:
                    raise
                delay = policy.backoff_base_ms * (policy.backoff_factor ** (attempt - 1))
                now += int(delay * rng.uniform(0.75, 1.25))
        raise TransientError("unreachable")

    def _ensure_disk_copy(self, src: Pfn, meta, now: int) -> Pfn:
        """Stage an archive replica onto its site's disk tier when needed."""
        if src.tier == "disk":
            return src
        disk = Pfn(src.site, "disk", src.path)
        existing = self._storage.stat(str(disk))
        if existing is None or existing.digest != meta.digest:
            reservation = self._storage.reserve_space(src.site, meta.size, now_ms=now)
            try:
                self._storage.stage(src.site, src.path, reservation, now_ms=now)
            finally:
                self._storage.release_reservation(reservation, now_ms=now)
        return disk


class _Runner:
    """One execute() call: a deterministic virtual-time event loop.

    Storage operations run at their start instant (effects apply then, which
    is safe because concurrent jobs touch distinct paths); their outcomes are
    dispatched as scheduled events at start + duration, so journal order,
    slot accounting, and retry backoff all live on the same virtual timeline.
    """

    def __init__(self, service: DataMoverService, request: TransferRequest,
                 jobs: dict[str, FileJob], crash_after_done: int | None):
        self.svc = service
        self.request = request
        self.jobs = jobs
        self.crash_after_done = crash_after_done
        self.steps = service._steps(request)
        seed = request.policy.jitter_seed
        if seed is None:
            seed = zlib.crc32(request.request_id.encode())
        self.rng = random.Random(seed)
        self.now = service._clock.now_ms()
        self.start = self.now
        self.heap: list[tuple[int, int, str, tuple]] = []
        self.seq = 0
        self.ready: deque[FileJob] = deque()
        self.active: set[str] = set()
        self.done_count = 0

    def schedule(self, at: int, kind: str, payload: tuple) -> None:
        self.seq += 1
        heapq.heappush(self.heap, (at, self.seq, kind, payload))

    def run(self) -> Report:
        svc, request = self.svc, self.request
        request.state = RUNNING
        svc._journal_request(request, self.now)
        if not is_pfn(request.dst):
            Path(request.dst).mkdir(parents=True, exist_ok=True)
            for d in svc.mkdir_entries(request.request_id):
                (Path(request.dst) / d).mkdir(parents=True, exist_ok=True)
        for path in sorted(self.jobs):
            job = self.jobs[path]
            if job.state == DONE:
                self.done_count += 1
            elif job.state != FAILED:
                self.ready.append(job)

        while True:
            self.pump()
            if not self.heap:
                break
            at, _, kind, payload = heapq.heappop(self.heap)
            self.now = max(self.now, at)
            svc._clock.advance_to(self.now)
            self.dispatch(kind, payload)

        request.state = COMPLETED if all(j.state == DONE for j in self.jobs.values()) \
            else PARTIAL_FAILED
        svc._journal_request(request, self.now)
        return svc._report(request, self.jobs, self.now - self.start)

    def dispatch(self, kind: str, payload: tuple) -> None:
        if kind == "ok":
            self.on_ok(*payload)
        elif kind == "fail":
            self.on_fail(*payload)
        elif kind == "retry":
            self.ready.append(payload[0])

    def pump(self) -> None:
        limit = self.request.policy.max_concurrent_files
        while self.ready and len(self.active) < limit:
            self.start_step(self.ready.popleft())

    def step_for(self, job: FileJob) -> str | None:
        if job.state == PENDING:
            return self.steps[0]
        if job.state == STAGED:
            return "transfer"
        if job.state == TRANSFERRED:
            return "archive" if "archive" in self.steps else None
        return None

    def start_step(self, job: FileJob) -> None:
        svc, request = self.svc, self.request
        if job.state == PENDING:
            digest = self.final_matches(job)
            if digest is not None:
                # destination already holds the bytes: done, no retransfer
                job.digest = digest
                self.finish(job)
                return
        step = self.step_for(job)
        if step is None:
            self.finish(job)
            return
        skip_digest = self.already_done(step, job)
        if skip_digest is not None:
            # output of this step already present with the right digest:
            # advance without touching storage (no events, no slot)
            if step == "transfer":
                job.digest = skip_digest
            job.state = _AFTER[step]
            svc._journal_job(request.request_id, job, self.now)
            if self.is_final(step):
                self.finish(job)
            else:
                self.ready.append(job)
            return
        if job.fresh_try:
            job.attempts += 1
            job.fresh_try = False
        job.state = _ACTIVE_FOR[step]
        svc._journal_job(request.request_id, job, self.now)
        self.active.add(job.path)
        try:
            duration = self.perform(step, job)
        except TransientError as exc:
            self.schedule(self.now + int(exc.details.get("duration_ms", 0)),
                          "fail", (job, step, exc, True))
            return
        except (PermanentError, ValidationError) as exc:
            self.schedule(self.now, "fail", (job, step, exc, False))
            return
        self.schedule(self.now + duration, "ok", (job, step))

    def final_matches(self, job: FileJob) -> str | None:
        """Digest when the final destination already equals the source."""
        svc, request = self.svc, self.request
        src_meta = svc._storage.stat(f"{request.src}/{job.path}")
        if src_meta is None:
            return None
        final = svc._final_dst(request, job.path)
        if is_pfn(final):
            dst_meta = svc._storage.stat(final)
            if dst_meta and dst_meta.digest == src_meta.digest:
                return dst_meta.digest
            return None
        local = Path(final)
        if local.is_file() and checksum(local.read_bytes()) == src_meta.digest:
            return src_meta.digest
        return None

    def already_done(self, step: str, job: FileJob) -> str | None:
        """Digest if the step's output already exists and matches the source."""
        svc, request = self.svc, self.request
        src_loc = parse_pfn(request.src)
        src_meta = svc._storage.stat(f"{request.src}/{job.path}")
        if src_meta is None:
            return None
        if step == "stage":
            disk = svc._storage.stat(f"site://{src_loc.site}/disk/{src_loc.path}/{job.path}")
            return disk.digest if disk and disk.digest == src_meta.digest else None
        if step == "transfer":
            target = svc._transfer_target(request, job.path)
            if is_pfn(target):
                dst_meta = svc._storage.stat(target)
                if dst_meta and dst_meta.digest == src_meta.digest:
                    return dst_meta.digest
                return None
            local = Path(target)
            if local.is_file() and checksum(local.read_bytes()) == src_meta.digest:
                return src_meta.digest
            return None
        # archive
        final = svc._storage.stat(svc._final_dst(request, job.path))
        return final.digest if final and final.digest == src_meta.digest else None

    def perform(self, step: str, job: FileJob) -> int:
        """Run the storage operation at the current virtual instant."""
        svc, request = self.svc, self.request
        src_loc = parse_pfn(request.src)
        rel = job.path
        if step == "stage":
            path = f"{src_loc.path}/{rel}"
            meta = svc._storage.stat(f"{request.src}/{rel}")
            if meta is None:
                raise NotFoundError(f"unknown archive path: {request.src}/{rel}")
            reservation = svc._storage.reserve_space(src_loc.site, meta.size,
                                                     now_ms=self.now)
            try:
                svc._storage.stage(src_loc.site, path, reservation, now_ms=self.now)
            finally:
                svc._storage.release_reservation(reservation, now_ms=self.now)
            return svc._storage.duration_ms(src_loc.site, meta.size)
        if step == "transfer":
            src_pfn = f"site://{src_loc.site}/disk/{src_loc.path}/{rel}" \
                if "stage" in self.steps else f"{request.src}/{rel}"
            result = svc._storage.transfer(src_pfn, svc._transfer_target(request, rel),
                                           now_ms=self.now)
            job.digest = result["digest"]
            return result["duration_ms"]
        dst_loc = parse_pfn(request.dst)
        svc._storage.archive_put(dst_loc.site, f"{dst_loc.path}/{rel}", now_ms=self.now)
        return svc._storage.duration_ms(dst_loc.site, job.size)

    def is_final(self, step: str) -> bool:
        return step == self.steps[-1]

    def on_ok(self, job: FileJob, step: str) -> None:
        self.active.discard(job.path)
        job.state = _AFTER[step]
        self.svc._journal_job(self.request.request_id, job, self.now)
        if self.is_final(step):
            self.finish(job)
        else:
            self.ready.append(job)

    def on_fail(self, job: FileJob, step: str, exc: EsgError, transient: bool) -> None:
        svc, request = self.svc, self.request
        self.active.discard(job.path)
        job.last_error = exc.message
        if transient and job.attempts <= request.policy.max_retries:
            job.state = self.stable_state(step)
            job.fresh_try = True
            svc._journal_job(request.request_id, job, self.now)
            delay = request.policy.backoff_base_ms * \
                (request.policy.backoff_factor ** (job.attempts - 1))
            delay = int(delay * self.rng.uniform(0.75, 1.25))
            self.schedule(self.now + delay, "retry", (job,))
        else:
            job.state = FAILED
            svc._journal_job(request.request_id, job, self.now)

    def stable_state(self, step: str) -> str:
        return {"stage": PENDING,
                "transfer": STAGED if "stage" in self.steps else PENDING,
                "archive": TRANSFERRED}[step]

    def finish(self, job: FileJob) -> None:
        job.state = DONE
        self.svc._journal_job(self.request.request_id, job, self.now)
        self.done_count += 1
        if self.crash_after_done is not None and self.done_count >= self.crash_after_done:
            raise CoordinatorCrash(
                f"injected crash after {self.done_count} completed files")
