"""Portal facade: scope filtering, job orchestration, data delivery.

Every public operation runs behind the deployment's LFN prefix (a community
portal only sees and serves its own subtree) and the portal performs its own
authorization checks before delegating; the inner services check again, so
disabling the portal layer alone still cannot leak data.
"""

from __future__ import annotations

import base64

from ..catalog import MetadataRecord
from ..datamover import TransferPolicy
from ..deployment import Grid
from ..errors import AuthorizationDenied, NotFoundError, ValidationError
from ..gridfmt import checksum, parse_constraint, read_dataset, render_constraint
from ..naming import lfn_segments, validate_lfn
from .jobs import Job, JobManager
from .selection import SelectionRequest, check_coverage, compile_selection


class PortalService:
    def __init__(self, grid: Grid, enforce_authz: bool = True):
        self.grid = grid
        self.enforce_authz = enforce_authz  # testing hook for defense-in-depth
        self.jobs = JobManager(grid.root / f"jobs-{grid.profile.name}.log",
                               grid.clock, workers=grid.profile.job_workers)
        self.jobs.register_resolver("selection", self._run_selection)
        self.jobs.register_resolver("fetch", self._run_fetch)
        self.jobs.recover()

    # -- scope -------------------------------------------------------------

    @property
    def prefix(self) -> str:
        return self.grid.profile.lfn_prefix

    def in_scope(self, lfn: str) -> bool:
        if self.prefix in ("", "lfn://"):
            return True
        pre = lfn_segments(self.prefix)
        return lfn_segments(lfn)[:len(pre)] == pre

    def _require_scope(self, lfn: str) -> None:
        validate_lfn(lfn)
        if not self.in_scope(lfn):
            raise NotFoundError(f"{lfn} is not served by this portal")

    def _check(self, token: str | None, resource: str, action: str) -> None:
        if self.enforce_authz:
            self.grid.security.check(token, resource, action)

    def _subject(self, token: str | None) -> tuple[str, bool]:
        verified = self.grid.security.peek(token) if token else None
        if verified is None:
            raise AuthorizationDenied("invalid token")
        return verified.subject, "esg-admin" in verified.groups

    # -- catalog views -----------------------------------------------------

    def search(self, query: str, filters: dict | None = None,
               detail: bool = False) -> list:
        ids = [rid for rid in self.grid.catalog.search(query, filters)
               if self.in_scope(self.grid.catalog.get(rid).logical_name)]
        if not detail:
            return ids
        return [self.record_view(rid) for rid in ids]

    def browse(self, path: str) -> list[dict]:
        if path in ("", "lfn://") and self.prefix not in ("", "lfn://"):
            path = self.prefix
        if path not in ("", "lfn://"):
            self._require_scope(path)
        return self.grid.catalog.browse(path)

    def record_view(self, record_id: str, version: int | None = None) -> dict:
        record = self.grid.catalog.get(record_id, version)
        self._require_scope(record.logical_name)
        view = record.to_dict()
        view["replicas"] = self.grid.replica.lookup(record.logical_name)
        view["relationships"] = [list(r) for r in record.effective_relationships()]
        return view

    def thredds(self, prefix: str) -> str:
        if prefix in ("", "lfn://"):
            prefix = self.prefix
        else:
            self._require_scope(prefix)
        return self.grid.catalog.export_thredds(prefix, self.grid.replica.lookup)

    # -- publishing ----------------------------------------------------------

    def publish(self, metadata: dict, token: str,
                site: str | None = None, tier: str = "archive",
                data_b64: str | None = None) -> str:
        """Publish a record; optionally land its bytes and register the replica."""
        record = MetadataRecord.from_dict({"id": "", "version": 0, **metadata})
        self._require_scope(record.logical_name)
        self._check(token, record.logical_name, "publish")
        record_id = self.grid.catalog.publish(record, token)
        if data_b64 is not None:
            if site is None:
                raise ValidationError("publishing bytes requires a site")
            path = record.logical_name[len("lfn://"):]
            pfn = f"site://{site}/{tier}/{path}"
            self.grid.storage.write_file(pfn, base64.b64decode(data_b64))
            self.grid.replica.add_replica(record.logical_name, pfn, token)
        return record_id

    def update(self, record_id: str, patch: dict, expected_version: int,
               token: str) -> int:
        record = self.grid.catalog.get(record_id)
        self._require_scope(record.logical_name)
        return self.grid.catalog.update(record_id, patch, expected_version, token)

    def add_replica(self, lfn: str, pfn: str, token: str, ttl_ms=None) -> dict:
        self._require_scope(lfn)
        entry = self.grid.replica.add_replica(lfn, pfn, token, ttl_ms=ttl_ms)
        return entry.to_dict()

    def remove_replica(self, lfn: str, pfn: str, token: str) -> None:
        self._require_scope(lfn)
        self.grid.replica.remove_replica(lfn, pfn, token)

    def define_virtual(self, name: str, expr: dict, metadata: dict, token: str) -> str:
        self._require_scope(name)
        self._check(token, name, "publish")
        return self.grid.vds.define_virtual(name, expr, metadata, token)

    # -- data delivery ---------------------------------------------------------

    def data_endpoint(self, name: str, constraint: str | None, token: str) -> bytes:
        """Synchronous constrained read; the analysis-client path."""
        self._require_scope(name)
        self._check(token, name, "read")
        if constraint:
            parse_constraint(constraint)  # 400 with offset on bad text
        data, _, _ = self.grid.vds.instantiate(name, constraint or None, token)
        return data

    def submit_selection(self, request: SelectionRequest, token: str) -> Job:
        self._require_scope(request.dataset)
        self._check(token, request.dataset, "read")
        record = self.grid.catalog.by_name(request.dataset)
        check_coverage(request, record.time_coverage, record.space_coverage)
        subject, _ = self._subject(token)
        detail = {"dataset": request.dataset, "variable": request.variable,
                  "time": request.time, "lat": request.lat, "lon": request.lon,
                  "level": request.level, "token": token}
        return self.jobs.submit("selection", subject, detail)

    def _run_selection(self, job: Job) -> dict:
        d = job.detail
        request = SelectionRequest(
            dataset=d["dataset"], variable=d["variable"],
            time=_pair(d.get("time")), lat=_pair(d.get("lat")),
            lon=_pair(d.get("lon")), level=_pair(d.get("level")))
        token = d["token"]
        whole, _, _ = self.grid.vds.instantiate(request.dataset, None, token)
        constraint = compile_selection(read_dataset(whole), request)
        rendered = render_constraint(constraint)
        data, pfn, _ = self.grid.vds.instantiate(request.dataset, rendered, token)
        return {"pfn": pfn, "digest": checksum(data), "constraint": rendered,
                "bytes": len(data)}

    def submit_fetch(self, lfns: list[str], mode: str, dest: str | None,
                     token: str) -> Job:
        for lfn in lfns:
            self._require_scope(lfn)
        subject, _ = self._subject(token)
        # credential/mode mismatches surface at submit, not inside the job
        # (fetch_lite re-checks; this layer just fails fast for the client)
        if mode == "frequent":
            self._check(token, "svc://datamover", "move")
        for lfn in lfns:
            self._check(token, lfn, "read")
        detail = {"lfns": lfns, "mode": mode, "dest": dest, "token": token}
        return self.jobs.submit("fetch", subject, detail)

    def _run_fetch(self, job: Job) -> dict:
        d = job.detail
        report = self.grid.mover.fetch_lite(d["lfns"], d["mode"], d.get("dest"),
                                            d["token"])
        files = []
        for i, entry in enumerate(report.files):
            files.append({**entry,
                          "url": f"/download/{job.job_id}?index={i}"
                          if d["mode"] == "casual" else None})
        if report.state != "COMPLETED":
            failed = [f["path"] for f in report.files if f["state"] != "DONE"]
            raise ValidationError(f"fetch incomplete: {failed}", files=files)
        return {"mode": d["mode"], "files": files}

    def job_status(self, job_id: str, token: str) -> Job:
        subject, is_admin = self._subject(token)
        return self.jobs.get(job_id, subject, is_admin)

    def list_jobs(self, token: str) -> list[Job]:
        subject, is_admin = self._subject(token)
        return self.jobs.list_for(subject, is_admin)

    def download(self, job_id: str, token: str, index: int = 0) -> tuple[bytes, str]:
        """Bytes + digest of a READY job result; byte-identical on repeats."""
        job = self.job_status(job_id, token)
        if job.state != "READY":
            raise ValidationError(f"job {job_id} is {job.state}, not READY",
                                  state=job.state)
        if job.kind == "selection":
            pfn = job.result["pfn"]
        else:
            if job.result.get("mode") == "frequent":
                raise ValidationError(
                    "frequent-mode fetches deliver straight to the destination; "
                    "nothing is held for pull")
            files = job.result["files"]
            if not 0 <= index < len(files):
                raise NotFoundError(f"job {job_id} has no file #{index}")
            pfn = files[index]["result"]
        data = self.grid.storage.read_file(pfn)
        return data, checksum(data)

    # -- mover passthrough -------------------------------------------------------

    def move(self, src: str, dst: str, token: str,
             policy: TransferPolicy | None = None) -> dict:
        request = self.grid.mover.plan(src, dst, token, policy)
        report = self.grid.mover.execute(request.request_id)
        return report.to_dict()

    def move_resume(self, request_id: str, token: str) -> dict:
        self._check(token, "svc://datamover", "move")
        return self.grid.mover.resume(request_id).to_dict()

    def move_status(self, request_id: str, token: str) -> dict:
        self._subject(token)
        return self.grid.mover.status(request_id)


def _pair(value) -> tuple[float, float] | None:
    if value is None:
        return None
    return (float(value[0]), float(value[1]))
