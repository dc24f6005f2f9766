"""Transcript leak auditor: clean runs pass, seeded violations fire."""

import base64
import copy

import pytest

from pds.errors import AuditError
from pds.sim_harness import audit_transcript, run_scenario


@pytest.fixture(scope="module")
def canonical_run():
    return run_scenario("scenarios/canonical.json")


def audit(run, entries=None, extra_pds=(), pn_stores=None):
    return audit_transcript(
        entries if entries is not None else run.transcript_entries,
        roles=run.roles,
        known_pds=list(run.known_pds) + list(extra_pds),
        pn_stores=pn_stores if pn_stores is not None else run.pn_stores(),
    )


def test_canonical_run_is_clean(canonical_run):
    report = audit(canonical_run)
    assert report.passed, report.to_text()
    assert report.messages_checked > 0


def test_rule_r1_fires_on_private_data_in_message(canonical_run):
    pd = canonical_run.known_pds[0]
    entries = copy.deepcopy(canonical_run.transcript_entries)
    victim = next(e for e in entries if e["kind"] == "send" and e["step"] == "StoreGrant")
    victim["payload"]["kr"] = base64.b64encode(pd).decode()  # grant echoes the data
    report = audit(canonical_run, entries=entries)
    assert any(f.rule == "R1" for f in report.findings), report.to_text()


def test_rule_r2_fires_on_metadata_to_index(canonical_run):
    entries = copy.deepcopy(canonical_run.transcript_entries)
    victim = next(e for e in entries if e["kind"] == "send" and e["step"] == "ReadAuth")
    victim["payload"]["md"] = {"type": "ssn"}
    report = audit(canonical_run, entries=entries)
    assert any(f.rule == "R2" for f in report.findings), report.to_text()


def test_rule_r2_fires_on_key_reference_value_to_index(canonical_run):
    entries = copy.deepcopy(canonical_run.transcript_entries)
    grant = next(e for e in entries if e["kind"] == "send" and e["step"] == "StoreGrant")
    victim = next(e for e in entries if e["kind"] == "send" and e["step"] == "ReadAuth")
    victim["payload"]["dp"]["name"] = grant["payload"]["kr"]  # smuggled as a name
    report = audit(canonical_run, entries=entries)
    assert any(f.rule == "R2" for f in report.findings), report.to_text()


def test_rule_r3_fires_on_master_key_to_storage(canonical_run):
    entries = copy.deepcopy(canonical_run.transcript_entries)
    victim = next(e for e in entries if e["kind"] == "send" and e["step"] == "ChunkGet")
    victim["payload"]["mk"] = next(
        e["payload"]["mk"] for e in entries
        if e["kind"] == "send" and e["step"] == "IndexPut")
    report = audit(canonical_run, entries=entries)
    assert any(f.rule == "R3" for f in report.findings), report.to_text()


def test_rule_r3_fires_on_owner_identity_to_storage(canonical_run):
    entries = copy.deepcopy(canonical_run.transcript_entries)
    victim = next(e for e in entries if e["kind"] == "send" and e["step"] == "ChunkPut")
    victim["payload"]["do"] = {"name": "alice", "location": "pn-1"}
    report = audit(canonical_run, entries=entries)
    assert any(f.rule == "R3" for f in report.findings), report.to_text()


def test_rule_r4_fires_on_reference_in_share_ack(canonical_run):
    entries = copy.deepcopy(canonical_run.transcript_entries)
    grant = next(e for e in entries if e["kind"] == "send" and e["step"] == "ShareGrant")
    ack = next(e for e in entries if e["kind"] == "send" and e["step"] == "ShareAck"
               and e["choreography_id"] == grant["choreography_id"])
    ack["payload"]["reason"] = grant["payload"]["kr2"]
    report = audit(canonical_run, entries=entries)
    assert any(f.rule == "R4" for f in report.findings), report.to_text()


def test_rule_r4_fires_on_grantor_reference_in_grant(canonical_run):
    entries = copy.deepcopy(canonical_run.transcript_entries)
    req = next(e for e in entries if e["kind"] == "send" and e["step"] == "ShareReq")
    grant = next(e for e in entries if e["kind"] == "send" and e["step"] == "ShareGrant"
                 and e["choreography_id"] == req["choreography_id"])
    grant["payload"]["alias"] = req["payload"]["kr1"]
    report = audit(canonical_run, entries=entries)
    assert any(f.rule == "R4" for f in report.findings), report.to_text()


def test_rule_r5_fires_on_private_data_in_pn_store(canonical_run):
    pd = canonical_run.known_pds[0]
    stores = copy.deepcopy(canonical_run.pn_stores())
    node = next(iter(stores))
    stores[node]["deadbeef" * 4] = {
        "value": base64.b64encode(pd).decode(),
        "status": "active",
        "version": 1,
    }
    report = audit(canonical_run, pn_stores=stores)
    assert any(f.rule == "R5" for f in report.findings), report.to_text()


def test_unknown_step_is_audit_error(canonical_run):
    entries = copy.deepcopy(canonical_run.transcript_entries)
    entries[0] = dict(entries[0], step="Exfiltrate")
    with pytest.raises(AuditError):
        audit(canonical_run, entries=entries)


def test_payloadless_transcript_is_audit_error(canonical_run):
    entries = copy.deepcopy(canonical_run.transcript_entries)
    entries = [
        {k: v for k, v in e.items() if k != "payload"} if e["kind"] == "send" else e
        for e in entries
    ]
    with pytest.raises(AuditError):
        audit(canonical_run, entries=entries)


def test_full_corpus_is_clean():
    from pathlib import Path

    for path in sorted(Path("scenarios").glob("*.json")):
        run = run_scenario(str(path))
        report = audit_transcript(run.transcript_entries, roles=run.roles,
                                  known_pds=run.known_pds, pn_stores=run.pn_stores())
        assert report.passed, f"{path.stem}: {report.to_text()}"
