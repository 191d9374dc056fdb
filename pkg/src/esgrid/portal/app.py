"""FastAPI application wrapping one grid deployment.

Endpoint map (all JSON unless noted):
  security   POST /register /login /admin/review /admin/policies
  catalog    POST /publish /catalog/records, PATCH /catalog/records/{id},
             GET /catalog/records/{id} /catalog/search /catalog/browse /catalog/thredds
  replicas   POST|DELETE /rls/replicas, GET /rls/lookup
  virtual    POST /vds/define, GET /vds/instantiate (ESGN bytes) /vds/cache/stats /vds/recipe
  delivery   GET /data/{path} (ESGN bytes), POST /selection, GET /jobs/{id},
             GET /download/{id} (bytes), POST /fetch
  mover      POST /mv, POST /mv/{id}/resume, GET /mv/{id}
  monitor    POST /monitor/heartbeat, GET /monitor/status /monitor/availability
             /monitor/services /monitor/events
"""

from __future__ import annotations

import threading
from pathlib import Path

from fastapi import Depends, FastAPI, Header, Query, Request, Response
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .. import __version__
from ..datamover import TransferPolicy
from ..deployment import Grid, load_grid
from ..errors import (
    AuthenticationError,
    AuthorizationDenied,
    ConflictError,
    EsgError,
    NotFoundError,
    TransientError,
    ValidationError,
)
from ..security import GroupPolicy
from . import schemas
from .selection import SelectionRequest
from .service import PortalService

ESGN_MEDIA = "application/x-esgn"

_STATUS = (
    (AuthorizationDenied, 403),
    (AuthenticationError, 401),
    (NotFoundError, 404),
    (ConflictError, 409),
    (ValidationError, 400),
    (TransientError, 503),
)


def _status_for(exc: EsgError) -> int:
    for klass, code in _STATUS:
        if isinstance(exc, klass):
            return code
    return 500


def bearer(authorization: str | None = Header(default=None)) -> str | None:
    if authorization and authorization.startswith("Bearer "):
        return authorization[len("Bearer "):]
    return None


# route prefixes owned by each optional service surface
SERVICE_PREFIXES = {
    "catalog": ("/catalog", "/publish"),
    "rls": ("/rls",),
    "vds": ("/vds", "/data", "/selection"),
    "datamover": ("/mv", "/fetch"),
    "monitor": ("/monitor",),
}


def create_app(grid: Grid | None = None, profile_path: str | None = None,
               portal: PortalService | None = None) -> FastAPI:
    grid = grid or load_grid(profile_path)
    portal = portal or PortalService(grid)
    app = FastAPI(title=f"esgrid portal ({grid.profile.name})", version=__version__)
    app.state.grid = grid
    app.state.portal = portal

    disabled = tuple(prefix for service, prefixes in SERVICE_PREFIXES.items()
                     if service not in grid.profile.services
                     for prefix in prefixes)

    @app.middleware("http")
    async def service_gate(request: Request, call_next):
        if disabled and request.url.path.startswith(disabled):
            return JSONResponse(status_code=404, content={"error": {
                "code": "not_found",
                "message": "service not enabled in this deployment profile"}})
        return await call_next(request)

    @app.exception_handler(EsgError)
    async def esg_error_handler(request: Request, exc: EsgError):
        return JSONResponse(status_code=_status_for(exc), content={"error": exc.to_dict()})

    # -- info / security ---------------------------------------------------

    @app.get("/info")
    def info():
        return {"name": grid.profile.name, "lfn_prefix": portal.prefix,
                "version": __version__, "portal_cache_site": grid.profile.portal_cache_site}

    @app.post("/register")
    def register(body: schemas.RegisterIn):
        req = grid.security.register(body.name, body.email, body.institution,
                                     body.requested_groups)
        return req.to_dict()

    @app.post("/login")
    def login(body: schemas.LoginIn):
        return {"token": grid.security.login(body.subject, body.passphrase)}

    @app.get("/admin/registrations")
    def registrations(token: str | None = Depends(bearer)):
        grid.security._require_admin(token)
        return [r.to_dict() for r in grid.security.pending_registrations()]

    @app.post("/admin/review")
    def review(body: schemas.ReviewIn, token: str | None = Depends(bearer)):
        status, passphrase = grid.security.review(
            body.request_id, body.decision, token, groups=body.groups, kind=body.kind)
        return {"status": status, "passphrase": passphrase}

    @app.post("/admin/policies")
    def add_policy(body: schemas.PolicyIn, token: str | None = Depends(bearer)):
        grid.security.add_policy(
            GroupPolicy(body.group, body.pattern, frozenset(body.actions)), token)
        return {"ok": True}

    @app.get("/admin/policies")
    def list_policies(token: str | None = Depends(bearer)):
        grid.security._require_admin(token)
        return [{"group": p.group, "pattern": p.pattern, "actions": sorted(p.actions)}
                for p in grid.security.policies()]

    # -- catalog ---------------------------------------------------------------

    @app.post("/publish")
    def publish(body: schemas.PublishIn, token: str | None = Depends(bearer)):
        record_id = portal.publish(body.metadata, token, site=body.site,
                                   tier=body.tier, data_b64=body.data_b64)
        return {"id": record_id}

    @app.post("/catalog/records")
    def publish_record(body: schemas.PublishIn, token: str | None = Depends(bearer)):
        return {"id": portal.publish(body.metadata, token)}

    @app.patch("/catalog/records/{record_id}")
    def patch_record(record_id: str, body: schemas.RecordPatchIn,
                     token: str | None = Depends(bearer)):
        version = portal.update(record_id, body.patch, body.expected_version, token)
        return {"id": record_id, "version": version}

    @app.get("/catalog/records/{record_id}")
    def get_record(record_id: str, version: int | None = None):
        return portal.record_view(record_id, version)

    @app.get("/catalog/search")
    def search(request: Request, q: str = "", detail: bool = False):
        filters = {k[len("filter."):]: v for k, v in request.query_params.items()
                   if k.startswith("filter.")}
        return {"results": portal.search(q, filters or None, detail=detail)}

    @app.get("/catalog/browse")
    def browse(path: str = ""):
        return {"children": portal.browse(path)}

    @app.get("/catalog/thredds")
    def thredds(prefix: str = ""):
        return Response(content=portal.thredds(prefix), media_type="application/xml")

    # -- replicas --------------------------------------------------------------

    @app.post("/rls/replicas")
    def add_replica(body: schemas.ReplicaIn, token: str | None = Depends(bearer)):
        return portal.add_replica(body.lfn, body.pfn, token, ttl_ms=body.ttl_ms)

    @app.delete("/rls/replicas")
    def remove_replica(lfn: str, pfn: str, token: str | None = Depends(bearer)):
        portal.remove_replica(lfn, pfn, token)
        return {"ok": True}

    @app.get("/rls/lookup")
    def lookup(lfn: str):
        return {"lfn": lfn, "pfns": grid.replica.lookup(lfn)}

    # -- virtual data ---------------------------------------------------------

    @app.post("/vds/define")
    def define(body: schemas.DefineIn, token: str | None = Depends(bearer)):
        return {"id": portal.define_virtual(body.name, body.expr, body.metadata, token)}

    @app.get("/vds/instantiate")
    def instantiate(name: str, constraint: str | None = None,
                    token: str | None = Depends(bearer)):
        data = portal.data_endpoint(name, constraint, token)
        return Response(content=data, media_type=ESGN_MEDIA)

    @app.get("/vds/cache/stats")
    def cache_stats():
        return grid.vds.stats.to_dict()

    @app.get("/vds/recipe")
    def recipe(name: str):
        portal._require_scope(name)
        return {"name": name, "expr": grid.vds.recipe(name)}

    # -- data delivery -----------------------------------------------------------

    @app.get("/data/{path:path}")
    def data(path: str, constraint: str | None = None,
             token: str | None = Depends(bearer)):
        data = portal.data_endpoint(f"lfn://{path}", constraint, token)
        return Response(content=data, media_type=ESGN_MEDIA)

    @app.post("/selection")
    def selection(body: schemas.SelectionIn, token: str | None = Depends(bearer)):
        request = SelectionRequest(dataset=body.dataset, variable=body.variable,
                                   time=body.time, lat=body.lat, lon=body.lon,
                                   level=body.level)
        job = portal.submit_selection(request, token)
        return {"job_id": job.job_id, "state": job.state}

    @app.post("/fetch")
    def fetch(body: schemas.FetchIn, token: str | None = Depends(bearer)):
        if body.mode not in ("casual", "frequent"):
            raise ValidationError(f"unknown fetch mode: {body.mode!r}")
        job = portal.submit_fetch(body.lfns, body.mode, body.dest, token)
        return {"job_id": job.job_id, "state": job.state}

    @app.get("/jobs")
    def jobs(token: str | None = Depends(bearer)):
        return {"jobs": [j.to_dict() for j in portal.list_jobs(token)]}

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str, token: str | None = Depends(bearer)):
        return portal.job_status(job_id, token).to_dict()

    @app.get("/download/{job_id}")
    def download(job_id: str, index: int = 0, token: str | None = Depends(bearer)):
        data, digest = portal.download(job_id, token, index)
        return Response(content=data, media_type=ESGN_MEDIA,
                        headers={"X-Digest": digest})

    # -- data mover -----------------------------------------------------------------

    @app.post("/mv")
    def move(body: schemas.MoveIn, token: str | None = Depends(bearer)):
        policy = TransferPolicy(
            max_concurrent_files=body.max_concurrent, max_retries=body.max_retries,
            backoff_base_ms=body.backoff_base_ms, backoff_factor=body.backoff_factor,
            jitter_seed=body.jitter_seed)
        return portal.move(body.src, body.dst, token, policy)

    @app.post("/mv/{request_id}/resume")
    def move_resume(request_id: str, token: str | None = Depends(bearer)):
        return portal.move_resume(request_id, token)

    @app.get("/mv/{request_id}")
    def move_status(request_id: str, token: str | None = Depends(bearer)):
        return portal.move_status(request_id, token)

    # -- monitor ------------------------------------------------------------------

    @app.post("/monitor/heartbeat")
    def heartbeat(body: schemas.HeartbeatIn):
        grid.monitor.heartbeat(body.service_id)
        return {"ok": True}

    @app.get("/monitor/status")
    def monitor_status(service_id: str | None = None):
        if service_id:
            return grid.monitor.describe(service_id)
        return {"services": grid.monitor.overview()}

    @app.get("/monitor/availability")
    def availability(service_id: str, window: int = Query(gt=0, description="ms")):
        return {"service_id": service_id, "window_ms": window,
                "availability": grid.monitor.availability(service_id, window)}

    @app.get("/monitor/services")
    def services():
        return {"services": grid.monitor.services()}

    @app.get("/monitor/events")
    def events(limit: int = 100):
        return {"events": grid.monitor.recent_events(limit)}

    ui_dir = Path(__file__).resolve().parents[3] / "frontend" / "dist"
    if ui_dir.is_dir():
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    if grid.profile.heartbeat_interval_ms > 0 and grid.profile.clock == "wall":
        _start_heartbeat_thread(app, grid)
    return app


def _start_heartbeat_thread(app: FastAPI, grid: Grid) -> None:
    stop = threading.Event()
    interval_s = grid.profile.heartbeat_interval_ms / 1000

    def beat():
        while not stop.wait(interval_s):
            grid.heartbeat_all()

    thread = threading.Thread(target=beat, daemon=True, name="esg-heartbeat")

    @app.on_event("startup")
    def _startup():
        grid.heartbeat_all()
        thread.start()

    @app.on_event("shutdown")
    def _shutdown():
        stop.set()


def main() -> None:  # uvicorn entry helper: python -m esgrid.portal.app
    import uvicorn

    uvicorn.run(create_app(), host="127.0.0.1", port=8462)


if __name__ == "__main__":
    main()
