import json

import pytest
from click.testing import CliRunner
from fastapi.testclient import TestClient

import esgrid.cli as cli
from esgrid.gridfmt import checksum, parse_constraint, read_dataset, subset, write_dataset

from .test_portal import PortalEnv, sample_dataset


@pytest.fixture
def env(tmp_path, monkeypatch):
    env = PortalEnv(tmp_path)
    monkeypatch.setattr(cli, "make_client",
                        lambda url: TestClient(env.app, raise_server_exceptions=False))
    return env


@pytest.fixture
def runner():
    return CliRunner()


def run(runner, args, token=None, expect=0):
    argv = (["--token", token] if token else []) + args
    result = runner.invoke(cli.main, argv, catch_exceptions=False)
    assert result.exit_code == expect, result.output + result.stderr
    return result


class TestSearchAndBrowse:
    def test_search_prints_one_id_per_line(self, env, runner):
        a = env.publish_dataset("lfn://pcm/run1/d1", sample_dataset())
        b = env.publish_dataset("lfn://pcm/run2/d2", sample_dataset())
        result = run(runner, ["search", "ocean", "temperature"])
        assert result.output.split() == [a, b]

    def test_browse_lists_children_with_counts(self, env, runner):
        env.publish_dataset("lfn://pcm/run1/d1", sample_dataset())
        result = run(runner, ["browse", "lfn://pcm"])
        assert result.output.splitlines()[0].startswith("run1\t1")

    def test_search_filters(self, env, runner):
        env.publish_dataset("lfn://pcm/run1/d1", sample_dataset())
        result = run(runner, ["search", "--filter", "investigation_kind=observation"])
        assert result.output.strip() == ""


class TestPublishAndData:
    def test_publish_from_file_then_data(self, env, runner, tmp_path):
        ds = sample_dataset()
        src = tmp_path / "d1.esgn"
        src.write_bytes(write_dataset(ds))
        run(runner, ["publish", "--lfn", "lfn://pcm/run3/d1", "--title", "cli published",
                     "--file", str(src), "--site", "ncar",
                     "--param", "PS:Pa:surface_air_pressure",
                     "--time-coverage", "0:9",
                     "--space-coverage", "-90:90:0:240"],
            token=env.admin)
        out = tmp_path / "out.esgn"
        result = run(runner, ["data", "lfn://pcm/run3/d1", "--constraint", "PS[0:1:0]",
                              "--out", str(out)], token=env.reader)
        expected = write_dataset(subset(ds, parse_constraint("PS[0:1:0]")))
        assert out.read_bytes() == expected
        assert checksum(expected) in result.output

    def test_publish_without_token_fails_with_json_error(self, env, runner):
        result = runner.invoke(cli.main, [
            "publish", "--lfn", "lfn://pcm/run4/d", "--title", "x"])
        assert result.exit_code == cli.EXIT_DENIED
        error = json.loads(result.stderr.strip())
        assert error["error"]["http_status"] == 403

    def test_data_unknown_dataset_exits_4(self, env, runner):
        result = runner.invoke(cli.main, ["--token", env.reader, "data",
                                          "lfn://pcm/ghost/x", "--out", "/tmp/x.esgn"])
        assert result.exit_code == cli.EXIT_NOT_FOUND


class TestSelect:
    def test_select_downloads_constrained_bytes(self, env, runner, tmp_path):
        ds = sample_dataset()
        env.publish_dataset("lfn://pcm/run1/d1", ds)
        out = tmp_path / "sel.esgn"
        result = run(runner, ["select", "--dataset", "lfn://pcm/run1/d1",
                              "--variable", "PS", "--lat", "-40:40",
                              "--time", "0:4", "--out", str(out)],
                     token=env.reader)
        assert "PS[0:1:4][1:1:2]" in result.output
        got = read_dataset(out.read_bytes())
        assert got.dim("lat").size == 2 and got.dim("time").size == 5


class TestFetchAndMove:
    def test_casual_fetch_writes_dest_files(self, env, runner, tmp_path):
        ds = sample_dataset(n_time=3)
        env.publish_dataset("lfn://pcm/run1/d1", ds)
        dest = tmp_path / "downloads"
        run(runner, ["fetch", "lfn://pcm/run1/d1", str(dest)], token=env.reader)
        assert (dest / "d1").read_bytes() == write_dataset(ds)

    def test_frequent_fetch_direct(self, env, runner, tmp_path):
        ds = sample_dataset(n_time=3)
        env.publish_dataset("lfn://pcm/run1/d1", ds)
        dest = tmp_path / "direct"
        run(runner, ["fetch", "--mode", "frequent", "lfn://pcm/run1/d1", str(dest)],
            token=env.admin)
        assert (dest / "d1").read_bytes() == write_dataset(ds)

    def test_mv_without_full_credential_exits_3(self, env, runner, tmp_path):
        env.publish_dataset("lfn://pcm/run1/d1", sample_dataset(n_time=2))
        result = runner.invoke(cli.main, [
            "--token", env.reader, "mv",
            "--src", "site://ncar/archive/pcm", "--dst", "site://pcmdi/archive/pcm"])
        assert result.exit_code == 3
        assert json.loads(result.stderr.strip())["error"]["code"] == "denied"

    def test_mv_replicates_directory(self, env, runner):
        env.publish_dataset("lfn://pcm/run1/d1", sample_dataset(n_time=2))
        result = run(runner, ["mv", "--src", "site://ncar/archive/pcm",
                              "--dst", "site://pcmdi/archive/pcm"], token=env.admin)
        assert "COMPLETED" in result.output
        assert env.grid.storage.exists("site://pcmdi/archive/pcm/run1/d1")


class TestAdminAndStatus:
    def test_full_registration_cycle_via_cli(self, env, runner):
        out = run(runner, ["register", "--name", "Ada", "--email", "ada@lab.test",
                           "--institution", "LAB", "--group", "climate"])
        request_id = out.output.strip()
        listing = run(runner, ["admin", "registrations"], token=env.admin)
        assert request_id in listing.output
        review = run(runner, ["admin", "review", "--request", request_id,
                              "--decision", "accept"], token=env.admin)
        passphrase = review.output.split("\t")[1].strip()
        token_out = run(runner, ["login", "--user", "ada@lab.test",
                                 "--passphrase", passphrase])
        assert env.grid.security.peek(token_out.output.strip()) is not None

    def test_status_lists_services(self, env, runner):
        env.grid.heartbeat_all()
        result = run(runner, ["status"])
        assert "catalog\tUP" in result.output
        single = run(runner, ["status", "catalog"])
        assert single.output.startswith("catalog\tUP")

    def test_replica_add_and_lookup(self, env, runner):
        env.grid.storage.write_file("site://ncar/disk/pcm/run5/f", b"bytes")
        run(runner, ["replica", "add", "--lfn", "lfn://pcm/run5/f",
                     "--pfn", "site://ncar/disk/pcm/run5/f"], token=env.admin)
        result = run(runner, ["replica", "lookup", "lfn://pcm/run5/f"])
        assert result.output.strip() == "site://ncar/disk/pcm/run5/f"

    def test_policy_add_via_cli(self, env, runner):
        run(runner, ["admin", "policy", "--group", "ocean", "--pattern",
                     "lfn://ocean/**", "--action", "read"], token=env.admin)
        policies = env.grid.security.policies()
        assert any(p.group == "ocean" for p in policies)
