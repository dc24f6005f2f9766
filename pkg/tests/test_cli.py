"""Operator tooling: pds-node, pdsctl, pds-sim."""

import json
import signal
import socket
import subprocess
import sys
import time
from pathlib import Path

import jsonschema
import pytest
from click.testing import CliRunner

from pds.cli import EXIT_DENIED, EXIT_USAGE
from pds.cli.ctl import REASON_EXIT
from pds.cli.sim_main import main as sim_main

DATA_DIR = Path(__file__).parent / "data"
INFRA = ["an-1", "in-1", "sn-1", "sn-2", "sn-3"]


def free_port():
    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    return port


def wait_listening(port, timeout_s=8.0):
    end = time.monotonic() + timeout_s
    while time.monotonic() < end:
        try:
            socket.create_connection(("127.0.0.1", port), 0.2).close()
            return True
        except OSError:
            time.sleep(0.05)
    return False


class CliCluster:
    """pds-node subprocesses plus pdsctl invocation helpers."""

    def __init__(self, root: Path):
        self.root = root
        self.ports = {nid: free_port() for nid in INFRA + ["pn-1", "pn-2"]}
        self.procs: dict[str, subprocess.Popen] = {}
        peers = {
            "audit": {"id": "an-1", "addr": self._addr("an-1")},
            "index": {"id": "in-1", "addr": self._addr("in-1")},
            "storage": [{"id": s, "addr": self._addr(s)} for s in ("sn-1", "sn-2", "sn-3")],
            "processing": [{"id": p, "addr": self._addr(p)} for p in ("pn-1", "pn-2")],
        }
        identities = {"pn-1": "alice", "pn-2": "bob"}
        roles = {"an": "audit", "in": "index", "sn": "storage", "pn": "processing"}
        for nid, port in self.ports.items():
            doc = {
                "role": roles[nid[:2]],
                "node_id": nid,
                "listen": self._addr(nid),
                "data_dir": str(root / "data" / nid),
                "peers": peers,
                "timeout_ms": 8000,
            }
            if nid in identities:
                doc["identity"] = identities[nid]
            (root / f"{nid}.json").write_text(json.dumps(doc))

    def _addr(self, nid):
        return f"127.0.0.1:{self.ports[nid]}"

    def config(self, nid) -> str:
        return str(self.root / f"{nid}.json")

    def start(self, nid):
        out = open(self.root / f"{nid}.out", "a")
        self.procs[nid] = subprocess.Popen(
            [sys.executable, "-m", "pds.cli.node_main", "--config", self.config(nid)],
            stdout=out, stderr=subprocess.STDOUT)
        assert wait_listening(self.ports[nid]), f"{nid} never came up"

    def stop(self, nid, sig=signal.SIGTERM):
        proc = self.procs.pop(nid, None)
        if proc and proc.poll() is None:
            proc.send_signal(sig)
            proc.wait(10)

    def stop_all(self):
        for nid in list(self.procs):
            self.stop(nid)

    def ctl(self, nid, *args, data: bytes | None = None, output=None):
        cmd = [sys.executable, "-m", "pds.cli.ctl", "--config", self.config(nid)]
        if output:
            cmd += ["--output", output]
        cmd += list(args)
        return subprocess.run(cmd, capture_output=True, input=data, timeout=60)


@pytest.fixture(scope="module")
def cli_cluster(tmp_path_factory):
    cluster = CliCluster(tmp_path_factory.mktemp("cli"))
    for nid in INFRA:
        cluster.start(nid)
    yield cluster
    cluster.stop_all()


class TestPdsNode:
    def test_bad_role_exits_2(self, tmp_path):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"role": "warden", "node_id": "x-1"}))
        proc = subprocess.run(
            [sys.executable, "-m", "pds.cli.node_main", "--config", str(cfg)],
            capture_output=True, timeout=30)
        assert proc.returncode == EXIT_USAGE

    def test_missing_config_exits_2(self):
        proc = subprocess.run(
            [sys.executable, "-m", "pds.cli.node_main", "--config", "/nonexistent.json"],
            capture_output=True, timeout=30)
        assert proc.returncode == EXIT_USAGE


class TestPdsctlFlow:
    def test_store_read_round_trip(self, cli_cluster, tmp_path):
        secret = b"\x00\x01binary secret material \xff\xfe0123456789"
        src = tmp_path / "secret.bin"
        src.write_bytes(secret)
        p = cli_cluster.ctl("pn-1", "store", "--alias", "fox", "--data", str(src),
                            "--meta", "type=note", "--chunks", "3")
        assert p.returncode == 0, p.stderr
        p = cli_cluster.ctl("pn-1", "read", "--alias", "fox", "--out", "-")
        assert p.returncode == 0, p.stderr
        assert p.stdout == secret  # stdout carries the bytes, nothing else

    def test_share_then_grantee_reads(self, cli_cluster, tmp_path):
        secret = b"shared cargo manifest: 7 crates of tea"
        src = tmp_path / "cargo.bin"
        src.write_bytes(secret)
        assert cli_cluster.ctl("pn-1", "store", "--alias", "cargo", "--data",
                               str(src)).returncode == 0
        cli_cluster.start("pn-2")
        p = cli_cluster.ctl("pn-1", "share", "--alias", "cargo", "--to", "bob@pn-2")
        assert p.returncode == 0, p.stderr
        time.sleep(0.5)  # grant delivery to the running grantee node
        cli_cluster.stop("pn-2")
        p = cli_cluster.ctl("pn-2", "read", "--alias", "cargo", "--out", "-")
        assert p.returncode == 0, p.stderr
        assert p.stdout == secret

    def test_read_after_revoke_exits_3_with_reason(self, cli_cluster, tmp_path):
        src = tmp_path / "x.bin"
        src.write_bytes(b"revocable content 123456")
        assert cli_cluster.ctl("pn-1", "store", "--alias", "rv", "--data",
                               str(src)).returncode == 0
        cli_cluster.start("pn-2")
        assert cli_cluster.ctl("pn-1", "share", "--alias", "rv", "--to",
                               "bob@pn-2").returncode == 0
        time.sleep(0.5)
        cli_cluster.stop("pn-2")
        assert cli_cluster.ctl("pn-1", "revoke", "--alias", "rv", "--from",
                               "bob").returncode == 0
        p = cli_cluster.ctl("pn-2", "read", "--alias", "rv", "--out", "-")
        assert p.returncode == EXIT_DENIED
        assert b"revoked" in p.stderr

    def test_json_output_matches_schema(self, cli_cluster, tmp_path):
        src = tmp_path / "j.bin"
        src.write_bytes(b"json mode payload")
        p = cli_cluster.ctl("pn-1", "store", "--alias", "jmode", "--data", str(src),
                            output="json")
        assert p.returncode == 0
        doc = json.loads(p.stdout)
        schema = json.loads((DATA_DIR / "cli_result.schema.json").read_text())
        jsonschema.validate(doc, schema)
        assert doc["ok"] is True and doc["op"] == "store"

        p = cli_cluster.ctl("pn-1", "update", "--alias", "jmode", "--data", str(src),
                            output="json")
        jsonschema.validate(json.loads(p.stdout), schema)

        p = cli_cluster.ctl("pn-1", "delete", "--alias", "jmode", output="json")
        jsonschema.validate(json.loads(p.stdout), schema)

        p = cli_cluster.ctl("pn-1", "read", "--alias", "jmode", "--out",
                            str(tmp_path / "out.bin"), output="json")
        doc = json.loads(p.stdout)
        jsonschema.validate(doc, schema)
        assert doc["outcome"] == "failed" and doc["reason"] == "deleted"
        assert p.returncode == EXIT_DENIED

    def test_unknown_alias_is_usage_error(self, cli_cluster):
        p = cli_cluster.ctl("pn-1", "read", "--alias", "never-stored", "--out", "-")
        assert p.returncode == EXIT_USAGE

    def test_node_restart_recovers_state(self, cli_cluster, tmp_path):
        secret = b"durable bytes across restart"
        src = tmp_path / "d.bin"
        src.write_bytes(secret)
        assert cli_cluster.ctl("pn-1", "store", "--alias", "dur", "--data",
                               str(src)).returncode == 0
        cli_cluster.stop("sn-1", signal.SIGKILL)
        cli_cluster.start("sn-1")
        p = cli_cluster.ctl("pn-1", "read", "--alias", "dur", "--out", "-")
        assert p.returncode == 0 and p.stdout == secret


class TestDenialReasonGolden:
    def test_exit_code_table_matches_golden_file(self):
        golden = json.loads((DATA_DIR / "denial_reasons.json").read_text())
        assert REASON_EXIT == golden

    def test_reason_strings_exist_in_protocol_layer(self):
        import pds.nodes.audit as audit
        import pds.nodes.index as index
        import pds.nodes.storage as storage

        protocol_reasons = {
            audit.DENY_UNKNOWN_KR, audit.DENY_REVOKED, audit.DENY_WRONG_PROCESSOR,
            audit.DENY_NOT_OWNER, index.FAIL_UNKNOWN, index.FAIL_DELETED,
            storage.FAIL_MISSING_CHUNK, "duplicate_mk", "mixed_generations",
            "inconsistent_total", "grantee_unreachable",
        }
        assert set(REASON_EXIT) == protocol_reasons


class TestPdsSim:
    def test_run_canonical_with_audit(self):
        runner = CliRunner()
        result = runner.invoke(sim_main, ["run", "--scenario", "scenarios/canonical.json",
                                          "--audit"])
        assert result.exit_code == 0, result.output
        assert "0 findings" in result.output

    def test_run_json_mode(self):
        runner = CliRunner()
        result = runner.invoke(sim_main, ["run", "--scenario", "scenarios/canonical.json",
                                          "--audit", "--output", "json"])
        assert result.exit_code == 0
        doc = json.loads(result.output)
        assert doc["audit"]["passed"] is True
        assert {r["id"] for r in doc["results"]} >= {"store", "share", "delete"}

    def test_collude_capabilities(self, tmp_path):
        runner = CliRunner()
        out = tmp_path / "run-out"
        result = runner.invoke(sim_main, ["run", "--scenario", "scenarios/canonical.json",
                                          "--out", str(out)])
        assert result.exit_code == 0
        index_dump = json.loads((out / "dumps" / "in-1.json").read_text())
        mk = next(iter(index_dump["records"]))

        result = runner.invoke(sim_main, ["collude", "--dump", str(out),
                                          "--nodes", "in-1,sn-1,sn-2,sn-3",
                                          "--target", mk])
        assert result.exit_code == 0
        assert "bytes: yes, attribution: no" in result.output

        result = runner.invoke(sim_main, ["collude", "--dump", str(out),
                                          "--nodes", "an-1", "--target", mk,
                                          "--output", "json"])
        doc = json.loads(result.output)
        assert doc["bytes"] is False and doc["attribution"] is True
        assert doc["owner"] == "alice"

    def test_collude_unknown_node_exits_2(self, tmp_path):
        runner = CliRunner()
        out = tmp_path / "run-out"
        runner.invoke(sim_main, ["run", "--scenario", "scenarios/canonical.json",
                                 "--out", str(out)])
        result = runner.invoke(sim_main, ["collude", "--dump", str(out),
                                          "--nodes", "zz-9", "--target", "00" * 16])
        assert result.exit_code == EXIT_USAGE

    def test_run_rejects_bad_scenario(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"nodes": [], "ops": []}))
        runner = CliRunner()
        result = runner.invoke(sim_main, ["run", "--scenario", str(bad)])
        assert result.exit_code == EXIT_USAGE

    def test_seeded_violation_fixture_exits_1(self, tmp_path):
        # inject a leaking transcript by hand, then audit through the API;
        # the CLI's nonzero-on-findings path is covered via a doctored run
        from pds.sim_harness import run_scenario, audit_transcript
        import base64
        import copy

        run = run_scenario("scenarios/canonical.json")
        entries = copy.deepcopy(run.transcript_entries)
        victim = next(e for e in entries if e["kind"] == "send" and e["step"] == "StoreGrant")
        victim["payload"]["mk"] = base64.b64encode(run.known_pds[0]).decode()
        report = audit_transcript(entries, roles=run.roles, known_pds=run.known_pds)
        assert not report.passed
