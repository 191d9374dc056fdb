"""Asynchronous portal jobs with journaled state.

Selections and fetches can be large, so they run on a bounded worker pool
and survive portal restarts: every transition is appended to a JSONL journal
and interrupted jobs are re-queued from it on startup (results of READY jobs
stay downloadable because their bytes live in the portal cache site).
"""

from __future__ import annotations

import json
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from ..clock import Clock
from ..errors import AuthorizationDenied, NotFoundError, ValidationError

QUEUED, RUNNING, READY, FAILED = "QUEUED", "RUNNING", "READY", "FAILED"


@dataclass
class Job:
    job_id: str
    kind: str  # selection | fetch
    owner: str
    detail: dict
    state: str = QUEUED
    result: dict | None = None
    error: str | None = None
    created_ms: int = 0
    updated_ms: int = 0

    def to_dict(self) -> dict:
        return {"job_id": self.job_id, "kind": self.kind, "owner": self.owner,
                "detail": self.detail, "state": self.state, "result": self.result,
                "error": self.error, "created_ms": self.created_ms,
                "updated_ms": self.updated_ms}


class JobManager:
    def __init__(self, journal_path: Path, clock: Clock, workers: int = 4):
        self._journal = Path(journal_path)
        self._journal.parent.mkdir(parents=True, exist_ok=True)
        self._clock = clock
        self._jobs: dict[str, Job] = {}
        self._lock = threading.Lock()
        self._pool = ThreadPoolExecutor(max_workers=workers)
        self._resolvers: dict[str, Callable[[Job], dict]] = {}
        if self._journal.exists():
            self._replay()

    def register_resolver(self, kind: str, fn: Callable[[Job], dict]) -> None:
        self._resolvers[kind] = fn

    def recover(self) -> None:
        """Re-enqueue jobs that were interrupted by a restart."""
        for job in list(self._jobs.values()):
            if job.state in (QUEUED, RUNNING):
                job.state = QUEUED
                self._record(job)
                self._pool.submit(self._run, job)

    def _replay(self) -> None:
        with open(self._journal, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    d = json.loads(line)
                    self._jobs[d["job_id"]] = Job(**d)

    def _record(self, job: Job) -> None:
        job.updated_ms = self._clock.now_ms()
        with self._lock:
            with open(self._journal, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(job.to_dict()) + "\n")

    def submit(self, kind: str, owner: str, detail: dict) -> Job:
        if kind not in self._resolvers:
            raise ValidationError(f"no resolver for job kind {kind!r}")
        job = Job(job_id=f"job-{uuid.uuid4().hex[:10]}", kind=kind, owner=owner,
                  detail=detail, created_ms=self._clock.now_ms())
        self._jobs[job.job_id] = job
        self._record(job)
        self._pool.submit(self._run, job)
        return job

    def _run(self, job: Job) -> None:
        job.state = RUNNING
        self._record(job)
        try:
            job.result = self._resolvers[job.kind](job)
            job.state = READY
        except Exception as exc:
            job.state = FAILED
            job.error = getattr(exc, "message", str(exc))
        self._record(job)

    def get(self, job_id: str, subject: str | None = None,
            is_admin: bool = False) -> Job:
        job = self._jobs.get(job_id)
        if job is None:
            raise NotFoundError(f"unknown job: {job_id}")
        if subject is not None and not is_admin and job.owner != subject:
            raise AuthorizationDenied("jobs are visible to their owner and admins only")
        return job

    def list_for(self, subject: str, is_admin: bool = False) -> list[Job]:
        jobs = [j for j in self._jobs.values()
                if is_admin or j.owner == subject]
        return sorted(jobs, key=lambda j: j.created_ms, reverse=True)

    def wait(self, job_id: str, timeout_s: float = 10.0) -> Job:
        """Poll until the job reaches a terminal state (tests, CLI)."""
        import time

        deadline = time.monotonic() + timeout_s
        while time.monotonic() < deadline:
            job = self.get(job_id)
            if job.state in (READY, FAILED):
                return job
            time.sleep(0.01)
        raise TimeoutError(f"job {job_id} still {self.get(job_id).state}")

    def shutdown(self) -> None:
        self._pool.shutdown(wait=True)
