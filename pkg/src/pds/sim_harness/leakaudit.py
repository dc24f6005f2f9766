"""Transcript leak auditor.

Walks every sent message of a full-payload transcript and checks the
privacy rules the protocol is built around:

- R1  private-data bytes appear in no message; fields carrying raw data
      exist only in the three chunk-bearing steps
- R2  traffic to or from the index node never carries metadata, key
      references, or chunk bytes
- R3  traffic to a storage node never carries master keys, key
      references, metadata, or the data owner
- R4  a share acknowledgment never exposes the grantee's new reference,
      and a grant never exposes the grantor's reference
- R5  processing-node persistent stores contain no private data

R1 matches private data as a contiguous byte substring (length >= 8), raw
or base64-encoded; chunks can collide with such substrings only by
chance, which is negligible for high-entropy data of 32 bytes or more.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from typing import Iterable

from ..errors import AuditError
from ..protocol import (
    ROLE_INDEX,
    ROLE_STORAGE,
    ChoreographyTable,
    canonical_metadata,
    default_table,
)

CHUNK_STEPS = {"ChunkPut", "ChunkDeliver", "ChunkReplace"}
R2_FORBIDDEN_KEYS = {"md", "metadata", "kr", "kr1", "kr2", "chunk"}
R3_FORBIDDEN_KEYS = {"mk", "kr", "kr1", "kr2", "md", "metadata", "do"}
MIN_PD_MATCH = 8


@dataclass
class LeakFinding:
    rule: str
    line: int
    node: str
    op: str
    step: str
    detail: str

    def to_json(self) -> dict:
        return {"rule": self.rule, "line": self.line, "node": self.node,
                "op": self.op, "step": self.step, "detail": self.detail}


@dataclass
class LeakReport:
    findings: list[LeakFinding] = field(default_factory=list)
    messages_checked: int = 0
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.findings

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "messages_checked": self.messages_checked,
            "findings": [f.to_json() for f in self.findings],
            "notes": self.notes,
        }

    def to_text(self) -> str:
        lines = [f"leak audit: {len(self.findings)} findings "
                 f"({self.messages_checked} messages checked)"]
        for f in self.findings:
            lines.append(f"  {f.rule} line {f.line} at {f.node} "
                         f"[{f.op}/{f.step}]: {f.detail}")
        lines.extend(f"  note: {n}" for n in self.notes)
        return "\n".join(lines)


def _walk_keys(obj) -> Iterable[str]:
    if isinstance(obj, dict):
        for k, v in obj.items():
            yield k
            yield from _walk_keys(v)
    elif isinstance(obj, list):
        for item in obj:
            yield from _walk_keys(item)


def _chunk_fields(payload: dict, schema: dict[str, str] | None) -> list[str]:
    """Base64 chunk field values, schema-declared or injected."""
    out = []
    for name, value in payload.items():
        kind = (schema or {}).get(name)
        if kind == "chunk" or (name == "chunk" and isinstance(value, str)):
            out.append(value)
    return out


def _decoded(values: list[str]) -> list[bytes]:
    out = []
    for v in values:
        try:
            out.append(base64.b64decode(v))
        except Exception:
            pass
    return out


class _Collected:
    """Key material seen anywhere in the transcript, for value-level scans."""

    def __init__(self):
        self.kr_values: set[str] = set()
        self.mk_values: set[str] = set()
        self.chunk_strings: set[str] = set()
        self.md_canons: set[str] = set()
        self.kr1_by_chor: dict[str, str] = {}
        self.kr2_by_chor: dict[str, str] = {}

    def ingest(self, entry: dict, schema: dict[str, str]) -> None:
        payload = entry["payload"]
        for name, kind in schema.items():
            if name not in payload:
                continue
            value = payload[name]
            if kind == "kr" and isinstance(value, str):
                self.kr_values.add(value)
            elif kind == "mk" and isinstance(value, str):
                self.mk_values.add(value)
            elif kind == "chunk" and isinstance(value, str):
                self.chunk_strings.add(value)
            elif kind == "metadata" and isinstance(value, dict) and value:
                self.md_canons.add(canonical_metadata(value))
        if entry["step"] == "ShareReq" and isinstance(payload.get("kr1"), str):
            self.kr1_by_chor[entry["choreography_id"]] = payload["kr1"]
        if entry["step"] == "ShareGrant" and isinstance(payload.get("kr2"), str):
            self.kr2_by_chor[entry["choreography_id"]] = payload["kr2"]


def audit_transcript(
    entries: list[dict],
    *,
    roles: dict[str, str],
    known_pds: Iterable[bytes] = (),
    pn_stores: dict[str, dict] | None = None,
    table: ChoreographyTable | None = None,
) -> LeakReport:
    """Check a full-payload transcript against rules R1-R4, and the given
    processing-node store dumps against R5.

    ``roles`` maps node addresses to their roles. Raises
    :class:`AuditError` on transcripts without payloads or with steps the
    choreography table does not know.
    """
    table = table or default_table()
    pds = [p for p in known_pds if len(p) >= MIN_PD_MATCH]
    report = LeakReport()
    findings: dict[tuple, LeakFinding] = {}

    def add(rule: str, line: int, node: str, op: str, step: str, detail: str) -> None:
        key = (rule, line)
        if key not in findings:
            findings[key] = LeakFinding(rule, line, node, op, step, detail)

    sends = []
    for line_no, entry in enumerate(entries, start=1):
        if entry.get("kind") != "send":
            continue
        for required in ("op", "step", "from", "to", "choreography_id"):
            if required not in entry:
                raise AuditError(f"line {line_no}: transcript entry missing {required!r}")
        if "payload" not in entry:
            raise AuditError(f"line {line_no}: transcript has no payloads "
                             "(leak audits need a sim-mode transcript)")
        schema = table.schema_for(entry["op"], entry["step"])
        if schema is None:
            raise AuditError(f"line {line_no}: unknown step "
                             f"({entry['op']}, {entry['step']})")
        sends.append((line_no, entry, schema))

    collected = _Collected()
    for _, entry, schema in sends:
        collected.ingest(entry, schema)

    for line_no, entry, schema in sends:
        payload = entry["payload"]
        op, step = entry["op"], entry["step"]
        sender, receiver = entry["from"], entry["to"]
        payload_text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        payload_bytes = payload_text.encode("utf-8")
        chunk_values = _chunk_fields(payload, schema)
        chunk_bytes = _decoded(chunk_values)

        # R1: private data must never appear, raw or base64, anywhere
        for pd in pds:
            pd_b64 = base64.b64encode(pd).decode("ascii")
            hit = (pd in payload_bytes or pd_b64 in payload_text
                   or any(pd in cb for cb in chunk_bytes))
            if hit:
                add("R1", line_no, sender, op, step, "private data bytes in message")
        if chunk_values and step not in CHUNK_STEPS:
            add("R1", line_no, sender, op, step,
                f"chunk field outside the chunk-bearing steps ({step})")

        unknown_fields = sorted(set(payload) - set(schema))

        in_index = ROLE_INDEX in (roles.get(sender), roles.get(receiver))
        if in_index:
            bad_keys = sorted(set(_walk_keys(payload)) & R2_FORBIDDEN_KEYS)
            if bad_keys:
                add("R2", line_no, receiver, op, step,
                    f"index traffic carries forbidden fields {bad_keys}")
            for kr in collected.kr_values:
                if kr in payload_text:
                    add("R2", line_no, receiver, op, step,
                        "index traffic carries a key reference value")
            for chunk in collected.chunk_strings:
                if chunk in payload_text:
                    add("R2", line_no, receiver, op, step,
                        "index traffic carries chunk bytes")
            for md in collected.md_canons:
                if md in payload_text:
                    add("R2", line_no, receiver, op, step,
                        "index traffic carries metadata")
            if unknown_fields:
                add("R2", line_no, receiver, op, step,
                    f"unexpected fields {unknown_fields} on index traffic")

        if roles.get(receiver) == ROLE_STORAGE:
            bad_keys = sorted(set(_walk_keys(payload)) & R3_FORBIDDEN_KEYS)
            if bad_keys:
                add("R3", line_no, receiver, op, step,
                    f"storage-bound message carries forbidden fields {bad_keys}")
            for value in collected.kr_values | collected.mk_values:
                if value in payload_text:
                    add("R3", line_no, receiver, op, step,
                        "storage-bound message carries key material")
            for md in collected.md_canons:
                if md in payload_text:
                    add("R3", line_no, receiver, op, step,
                        "storage-bound message carries metadata")
            if unknown_fields:
                add("R3", line_no, receiver, op, step,
                    f"unexpected fields {unknown_fields} on storage-bound message")

        if step == "ShareAck":
            kr2 = collected.kr2_by_chor.get(entry["choreography_id"])
            if kr2 and kr2 in payload_text:
                add("R4", line_no, sender, op, step,
                    "share acknowledgment exposes the grantee's reference")
            if {"kr", "kr2"} & set(_walk_keys(payload)):
                add("R4", line_no, sender, op, step,
                    "share acknowledgment carries a reference field")
        if step == "ShareGrant":
            kr1 = collected.kr1_by_chor.get(entry["choreography_id"])
            if kr1 and kr1 in payload_text:
                add("R4", line_no, sender, op, step,
                    "share grant exposes the grantor's reference")
            if "kr1" in set(_walk_keys(payload)):
                add("R4", line_no, sender, op, step,
                    "share grant carries the grantor reference field")

    # R5: processing-node persistent stores hold aliases, references and
    # metadata only, never private data
    for node_id, records in (pn_stores or {}).items():
        for key, rec in sorted(records.items()):
            try:
                value = base64.b64decode(rec["value"])
            except Exception:
                raise AuditError(f"bad store dump for {node_id}/{key}")
            value_text = value.decode("utf-8", errors="replace")
            for pd in pds:
                if pd in value or base64.b64encode(pd).decode("ascii") in value_text:
                    add("R5", 0, node_id, "-", "-",
                        f"private data bytes in persistent store under {key!r}")

    report.findings = [findings[k] for k in sorted(findings, key=lambda k: (k[1], k[0]))]
    report.messages_checked = len(sends)
    return report
