"""One end-to-end pass over a real uvicorn socket (no test-client shortcuts)."""

import socket
import threading
import time

import httpx
import pytest
import uvicorn

from esgrid.gridfmt import parse_constraint, subset, write_dataset

from .test_portal import PortalEnv, sample_dataset


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


@pytest.fixture
def live_env(tmp_path):
    env = PortalEnv(tmp_path)
    port = free_port()
    config = uvicorn.Config(env.app, host="127.0.0.1", port=port, log_level="error")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + 10
    while not server.started:
        if time.monotonic() > deadline:
            raise RuntimeError("server did not start")
        time.sleep(0.02)
    yield env, f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=5)


def test_portal_serves_over_real_http(live_env):
    env, url = live_env
    ds = sample_dataset()
    env.publish_dataset("lfn://pcm/run1/d1", ds)

    with httpx.Client(base_url=url, timeout=10) as client:
        info = client.get("/info").json()
        assert info["name"] == "esg-wide"

        token = client.post("/login", json={
            "subject": "admin@esg.test", "passphrase": "admin-pass"}).json()["token"]
        headers = {"Authorization": f"Bearer {token}"}

        found = client.get("/catalog/search", params={"q": "ocean"}).json()["results"]
        assert len(found) == 1

        data = client.get("/data/pcm/run1/d1",
                          params={"constraint": "PS[0:1:1]"}, headers=headers)
        assert data.status_code == 200
        assert data.content == write_dataset(subset(ds, parse_constraint("PS[0:1:1]")))
