"""esg: command-line client for the grid portal.

Every subcommand is a thin wrapper over the portal HTTP API (the stand-in
for analysis tools that pull data through constrained URLs).  Exit codes:
0 success, 1 error, 2 usage, 3 authorization denied, 4 not found.  Failures
print one machine-readable JSON line to stderr.
"""

from __future__ import annotations

import base64
import hashlib
import json
import time
from pathlib import Path

import click
import httpx

DEFAULT_URL = "http://127.0.0.1:8462"

EXIT_DENIED = 3
EXIT_NOT_FOUND = 4


def make_client(url: str) -> httpx.Client:
    return httpx.Client(base_url=url, timeout=60.0)


class CliError(click.ClickException):
    def __init__(self, payload: dict, exit_code: int = 1):
        super().__init__(payload.get("message", "error"))
        self.payload = payload
        self.exit_code = exit_code

    def show(self, file=None) -> None:
        click.echo(json.dumps({"error": self.payload}), err=True)


def _fail(resp: httpx.Response) -> CliError:
    try:
        payload = resp.json().get("error", {"message": resp.text})
    except Exception:
        payload = {"message": resp.text or f"HTTP {resp.status_code}"}
    payload.setdefault("http_status", resp.status_code)
    exit_code = {403: EXIT_DENIED, 401: EXIT_DENIED, 404: EXIT_NOT_FOUND}.get(
        resp.status_code, 1)
    return CliError(payload, exit_code)


class Session:
    def __init__(self, url: str, token: str | None):
        self.client = make_client(url)
        self.token = token

    def headers(self) -> dict:
        return {"Authorization": f"Bearer {self.token}"} if self.token else {}

    def call(self, method: str, path: str, **kwargs) -> httpx.Response:
        resp = self.client.request(method, path, headers=self.headers(), **kwargs)
        if resp.status_code >= 400:
            raise _fail(resp)
        return resp

    def poll_job(self, job_id: str, timeout_s: float = 120.0) -> dict:
        deadline = time.monotonic() + timeout_s
        while True:
            job = self.call("GET", f"/jobs/{job_id}").json()
            if job["state"] == "READY":
                return job
            if job["state"] == "FAILED":
                raise CliError({"message": job.get("error") or "job failed",
                                "job_id": job_id})
            if time.monotonic() > deadline:
                raise CliError({"message": "timeout waiting for job", "job_id": job_id})
            time.sleep(0.05)


pass_session = click.make_pass_decorator(Session)


@click.group()
@click.option("--url", envvar="ESG_PORTAL_URL", default=DEFAULT_URL,
              help="Portal base URL (env ESG_PORTAL_URL).")
@click.option("--token", envvar="ESG_TOKEN", default=None,
              help="Sign-on token (env ESG_TOKEN).")
@click.pass_context
def main(ctx, url, token):
    """Client for the data grid portal."""
    ctx.obj = Session(url, token)


@main.command()
@click.option("--name", required=True)
@click.option("--email", required=True)
@click.option("--institution", default="")
@click.option("--group", "groups", multiple=True)
@pass_session
def register(session, name, email, institution, groups):
    """Request an account; an admin must accept it."""
    out = session.call("POST", "/register", json={
        "name": name, "email": email, "institution": institution,
        "requested_groups": list(groups)}).json()
    click.echo(out["request_id"])


@main.command()
@click.option("--user", required=True)
@click.option("--passphrase", required=True)
@pass_session
def login(session, user, passphrase):
    """Print a sign-on token for ESG_TOKEN."""
    out = session.call("POST", "/login",
                       json={"subject": user, "passphrase": passphrase}).json()
    click.echo(out["token"])


def _pair(text: str | None) -> list[float] | None:
    if text is None:
        return None
    lo, _, hi = text.partition(":")
    return [float(lo), float(hi)]


@main.command()
@click.option("--lfn", required=True)
@click.option("--title", required=True)
@click.option("--summary", default="")
@click.option("--file", "data_file", type=click.Path(exists=True, path_type=Path),
              default=None, help="ESGN file to land at --site.")
@click.option("--site", default=None)
@click.option("--tier", default="archive", type=click.Choice(["disk", "archive"]))
@click.option("--param", "params", multiple=True, help="name:units:standard_name")
@click.option("--investigation-kind", default="simulation")
@click.option("--dataset-kind", default="plain")
@click.option("--time-coverage", default=None, help="lo:hi")
@click.option("--space-coverage", default=None, help="latmin:latmax:lonmin:lonmax")
@pass_session
def publish(session, lfn, title, summary, data_file, site, tier, params,
            investigation_kind, dataset_kind, time_coverage, space_coverage):
    """Publish a dataset record (and optionally its bytes)."""
    metadata = {
        "logical_name": lfn, "title": title, "summary": summary,
        "classification": {"investigation_kind": investigation_kind,
                           "dataset_kind": dataset_kind, "relationships": []},
        "parameters": [dict(zip(("name", "units", "standard_name"),
                                (p.split(":") + ["", ""])[:3])) for p in params],
        "constituent_files": [lfn],
    }
    if time_coverage:
        metadata["time_coverage"] = _pair(time_coverage)
    if space_coverage:
        metadata["space_coverage"] = [float(x) for x in space_coverage.split(":")]
    body = {"metadata": metadata, "site": site, "tier": tier}
    if data_file is not None:
        if site is None:
            raise CliError({"message": "--file requires --site"}, 2)
        body["data_b64"] = base64.b64encode(data_file.read_bytes()).decode()
    out = session.call("POST", "/publish", json=body).json()
    click.echo(out["id"])


@main.command()
@click.argument("query", nargs=-1)
@click.option("--filter", "filters", multiple=True, help="field=value")
@click.option("--detail", is_flag=True)
@pass_session
def search(session, query, filters, detail):
    """One matching record id (or name) per line."""
    params = {"q": " ".join(query), "detail": detail}
    for f in filters:
        key, _, value = f.partition("=")
        params[f"filter.{key}"] = value
    results = session.call("GET", "/catalog/search", params=params).json()["results"]
    for r in results:
        click.echo(f"{r['id']}\t{r['logical_name']}\t{r['title']}" if detail else r)


@main.command()
@click.argument("path", default="")
@pass_session
def browse(session, path):
    """List hierarchy children with record counts."""
    out = session.call("GET", "/catalog/browse", params={"path": path}).json()
    for child in out["children"]:
        click.echo(f"{child['name']}\t{child['records']}\t{child['path']}")


@main.command()
@click.option("--name", required=True)
@click.option("--recipe", "recipe_file", required=True, type=click.File("r"),
              help="JSON expression tree (ref/subset/concat), '-' for stdin.")
@click.option("--title", required=True)
@click.option("--summary", default="")
@pass_session
def define(session, name, recipe_file, title, summary):
    """Define a virtual dataset from a recipe file."""
    expr = json.load(recipe_file)
    out = session.call("POST", "/vds/define", json={
        "name": name, "expr": expr,
        "metadata": {"title": title, "summary": summary}}).json()
    click.echo(out["id"])


@main.command()
@click.argument("name")
@click.option("--constraint", default=None)
@click.option("--out", "out_file", required=True, type=click.Path(path_type=Path))
@pass_session
def data(session, name, constraint, out_file):
    """Constrained synchronous read of a dataset into a local ESGN file."""
    path = name[len("lfn://"):] if name.startswith("lfn://") else name
    params = {"constraint": constraint} if constraint else {}
    resp = session.call("GET", f"/data/{path}", params=params)
    out_file.parent.mkdir(parents=True, exist_ok=True)
    out_file.write_bytes(resp.content)
    click.echo(f"{out_file}\t{hashlib.sha256(resp.content).hexdigest()}")


@main.command()
@click.option("--dataset", required=True)
@click.option("--variable", required=True)
@click.option("--lat", default=None, help="lo:hi")
@click.option("--lon", default=None, help="lo:hi")
@click.option("--time", "time_range", default=None, help="lo:hi")
@click.option("--level", default=None, help="lo:hi")
@click.option("--out", "out_file", required=True, type=click.Path(path_type=Path))
@click.option("--timeout", default=120.0)
@pass_session
def select(session, dataset, variable, lat, lon, time_range, level, out_file, timeout):
    """Aggregated data selection: submit, wait, download."""
    body = {"dataset": dataset, "variable": variable, "lat": _pair(lat),
            "lon": _pair(lon), "time": _pair(time_range), "level": _pair(level)}
    job_id = session.call("POST", "/selection", json=body).json()["job_id"]
    job = session.poll_job(job_id, timeout)
    resp = session.call("GET", f"/download/{job_id}")
    out_file.parent.mkdir(parents=True, exist_ok=True)
    out_file.write_bytes(resp.content)
    digest = hashlib.sha256(resp.content).hexdigest()
    if resp.headers.get("X-Digest") not in (None, digest):
        raise CliError({"message": "digest mismatch on download", "job_id": job_id})
    click.echo(f"{out_file}\t{job['result']['constraint']}\t{digest}")


@main.command()
@click.argument("lfns", nargs=-1, required=True)
@click.argument("dest", type=click.Path(path_type=Path))
@click.option("--mode", type=click.Choice(["casual", "frequent"]), default="casual")
@click.option("--timeout", default=120.0)
@pass_session
def fetch(session, lfns, dest, mode, timeout):
    """Fetch LFNs into DEST; casual pulls via the portal cache, frequent goes direct."""
    dest.mkdir(parents=True, exist_ok=True)
    body = {"lfns": list(lfns), "mode": mode,
            "dest": str(dest.resolve()) if mode == "frequent" else None}
    job_id = session.call("POST", "/fetch", json=body).json()["job_id"]
    job = session.poll_job(job_id, timeout)
    for entry in job["result"]["files"]:
        name = entry["path"].rsplit("/", 1)[-1]
        target = dest / name
        if mode == "casual":
            resp = session.call("GET", entry["url"])
            target.write_bytes(resp.content)
        local_digest = hashlib.sha256(target.read_bytes()).hexdigest()
        if entry["digest"] and local_digest != entry["digest"]:
            raise CliError({"message": "digest mismatch", "lfn": entry["path"]})
        click.echo(f"{target}\t{local_digest}")


@main.command()
@click.option("--src", required=True)
@click.option("--dst", required=True)
@click.option("--max-concurrent", default=4)
@click.option("--max-retries", default=8)
@click.option("--resume", "resume_id", default=None,
              help="Resume an interrupted request instead of starting fresh.")
@pass_session
def mv(session, src, dst, max_concurrent, max_retries, resume_id):
    """Robust directory replication (DataMover)."""
    if resume_id:
        report = session.call("POST", f"/mv/{resume_id}/resume").json()
    else:
        report = session.call("POST", "/mv", json={
            "src": src, "dst": dst, "max_concurrent": max_concurrent,
            "max_retries": max_retries}).json()
    click.echo(f"{report['request_id']}\t{report['state']}\t"
               f"done={report['done']}\tfailed={report['failed']}\t"
               f"elapsed_ms={report['elapsed_ms']}")
    if report["state"] != "COMPLETED":
        for f in report["files"]:
            if f["state"] != "DONE":
                click.echo(f"  {f['path']}\t{f['state']}\t{f['error']}", err=True)
        raise CliError({"message": "transfer incomplete",
                        "request_id": report["request_id"]})


@main.command()
@click.argument("service_id", required=False)
@pass_session
def status(session, service_id):
    """Monitor view: all services or one."""
    if service_id:
        out = session.call("GET", "/monitor/status",
                           params={"service_id": service_id}).json()
        click.echo(f"{out['service_id']}\t{out['state']}\t{out['last_heartbeat']}")
    else:
        out = session.call("GET", "/monitor/status").json()
        for svc in out["services"]:
            click.echo(f"{svc['service_id']}\t{svc['state']}")


@main.group()
def admin():
    """Administrative operations (registration review, policies)."""


@admin.command("registrations")
@pass_session
def admin_registrations(session):
    for r in session.call("GET", "/admin/registrations").json():
        click.echo(f"{r['request_id']}\t{r['email']}\t{r['status']}")


@admin.command("review")
@click.option("--request", "request_id", required=True)
@click.option("--decision", type=click.Choice(["accept", "reject"]), required=True)
@click.option("--group", "groups", multiple=True)
@click.option("--kind", default="moderate", type=click.Choice(["moderate", "full"]))
@pass_session
def admin_review(session, request_id, decision, groups, kind):
    out = session.call("POST", "/admin/review", json={
        "request_id": request_id, "decision": decision,
        "groups": list(groups) or None, "kind": kind}).json()
    line = out["status"]
    if out.get("passphrase"):
        line += f"\t{out['passphrase']}"
    click.echo(line)


@admin.command("policy")
@click.option("--group", required=True)
@click.option("--pattern", required=True)
@click.option("--action", "actions", multiple=True, required=True)
@pass_session
def admin_policy(session, group, pattern, actions):
    session.call("POST", "/admin/policies", json={
        "group": group, "pattern": pattern, "actions": list(actions)})
    click.echo("ok")


@main.group()
def replica():
    """Replica location entries."""


@replica.command("add")
@click.option("--lfn", required=True)
@click.option("--pfn", required=True)
@pass_session
def replica_add(session, lfn, pfn):
    session.call("POST", "/rls/replicas", json={"lfn": lfn, "pfn": pfn})
    click.echo("ok")


@replica.command("lookup")
@click.argument("lfn")
@pass_session
def replica_lookup(session, lfn):
    for pfn in session.call("GET", "/rls/lookup", params={"lfn": lfn}).json()["pfns"]:
        click.echo(pfn)


@replica.command("remove")
@click.option("--lfn", required=True)
@click.option("--pfn", required=True)
@pass_session
def replica_remove(session, lfn, pfn):
    session.call("DELETE", "/rls/replicas", params={"lfn": lfn, "pfn": pfn})
    click.echo("ok")


if __name__ == "__main__":
    main()
