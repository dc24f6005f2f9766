"""Message vocabulary, wire encoding, and choreography tables.

Every hop of every operation is an :class:`Envelope` carrying one typed
payload. The set of legal (operation, step, sender role, receiver role)
rows ships as a versioned data file (``choreography-v1.json``) so that
independent implementations interoperate; a node rejects any message that
is not a row of that table addressed to its own role.

Wire format: a frame is a 4-byte big-endian length followed by the UTF-8
JSON body with sorted keys, so equal envelopes produce byte-identical
frames.
"""

from __future__ import annotations

import base64
import json
import struct
from dataclasses import dataclass, field
from importlib import resources
from typing import Any

from .errors import EncodingError, ProtocolError
from .keyspace import Hkr, Identity, is_key, valid_location

TABLE_RESOURCE = "choreography-v1.json"
MAX_FRAME_BYTES = 2 << 20
MAX_METADATA_BYTES = 4 << 10
MAX_STR_CHARS = 256

ROLE_PROCESSING = "processing"
ROLE_AUDIT = "audit"
ROLE_INDEX = "index"
ROLE_STORAGE = "storage"
ROLES = (ROLE_PROCESSING, ROLE_AUDIT, ROLE_INDEX, ROLE_STORAGE)

OPS = ("store", "retrieve", "update", "delete", "share", "revoke")

ACCEPT = "accept"
REJECT_UNKNOWN_STEP = "unknown_step"
REJECT_WRONG_ROLE = "wrong_role"
REJECT_BAD_SCHEMA = "bad_schema"


def canonical_metadata(md: dict[str, str]) -> str:
    """Deterministic serialization of a metadata map (sorted keys)."""
    return json.dumps(md, sort_keys=True, separators=(",", ":"))


def validate_metadata(md: Any) -> dict[str, str]:
    if not isinstance(md, dict):
        raise EncodingError("metadata must be a map")
    for k, v in md.items():
        if not isinstance(k, str) or not isinstance(v, str):
            raise EncodingError("metadata keys and values must be strings")
    if len(canonical_metadata(md).encode("utf-8")) > MAX_METADATA_BYTES:
        raise EncodingError(f"metadata exceeds {MAX_METADATA_BYTES} byte cap")
    return md


@dataclass(frozen=True)
class Envelope:
    """One protocol message in flight.

    ``choreography_id`` is a 16-byte nonce (hex) constant across all hops
    of one operation instance; it disambiguates concurrent operations that
    would otherwise share an HKR.
    """

    choreography_id: str
    op: str
    step: str
    sender: str
    receiver: str
    payload: dict = field(default_factory=dict)

    def to_wire(self) -> dict:
        return {
            "choreography_id": self.choreography_id,
            "op": self.op,
            "step": self.step,
            "from": self.sender,
            "to": self.receiver,
            "payload": self.payload,
        }

    @classmethod
    def from_wire(cls, obj: dict) -> "Envelope":
        try:
            return cls(
                choreography_id=obj["choreography_id"],
                op=obj["op"],
                step=obj["step"],
                sender=obj["from"],
                receiver=obj["to"],
                payload=obj["payload"],
            )
        except (KeyError, TypeError) as exc:
            raise EncodingError(f"bad envelope: {exc}") from exc


# ---------------------------------------------------------------------------
# Payload field validation. Each schema entry maps a field name to a kind;
# the kinds below also tell the leak auditor which fields carry key
# material or data-bearing bytes.
# ---------------------------------------------------------------------------

def _check_chunk(v: Any) -> bool:
    if not isinstance(v, str) or not v:
        return False
    try:
        return len(base64.b64decode(v, validate=True)) > 0
    except Exception:
        return False


def _check_entries(v: Any) -> bool:
    if not isinstance(v, list) or len(v) < 2:
        return False
    for item in v:
        if not (isinstance(item, list) and len(item) == 2):
            return False
        addr, pk = item
        if not (valid_location(addr) and is_key(pk)):
            return False
    return True


def _check_identity(v: Any) -> bool:
    try:
        Identity.from_wire(v)
        return True
    except EncodingError:
        return False


def _check_hkr(v: Any) -> bool:
    try:
        Hkr.from_wire(v)
        return True
    except EncodingError:
        return False


def _check_metadata(v: Any) -> bool:
    try:
        validate_metadata(v)
        return True
    except EncodingError:
        return False


_FIELD_CHECKS = {
    "kr": is_key,
    "mk": is_key,
    "pk": is_key,
    "identity": _check_identity,
    "hkr": _check_hkr,
    "chunk": _check_chunk,
    "metadata": _check_metadata,
    "entries": _check_entries,
    "int": lambda v: isinstance(v, int) and not isinstance(v, bool) and v >= 0,
    "bool": lambda v: isinstance(v, bool),
    "str": lambda v: isinstance(v, str) and 0 < len(v) <= MAX_STR_CHARS,
    "reason": lambda v: v is None or (isinstance(v, str) and len(v) <= MAX_STR_CHARS),
    "addr": valid_location,
    "alias": lambda v: isinstance(v, str) and 0 < len(v) <= MAX_STR_CHARS,
}


@dataclass(frozen=True)
class StepRow:
    op: str
    step: str
    sender_role: str
    receiver_role: str
    payload_schema: dict[str, str]


class ChoreographyTable:
    """The legal message rows, keyed by (op, step, sender role)."""

    def __init__(self, rows: list[StepRow], version: int):
        self.version = version
        self.rows = rows
        self._by_key: dict[tuple[str, str, str], StepRow] = {}
        for row in rows:
            key = (row.op, row.step, row.sender_role)
            if key in self._by_key:
                raise ProtocolError(REJECT_BAD_SCHEMA, f"duplicate table row {key}")
            self._by_key[key] = row

    def lookup(self, op: str, step: str, sender_role: str) -> StepRow | None:
        return self._by_key.get((op, step, sender_role))

    def steps_for(self, op: str, step: str) -> list[StepRow]:
        return [r for r in self.rows if r.op == op and r.step == step]

    def schema_for(self, op: str, step: str) -> dict[str, str] | None:
        rows = self.steps_for(op, step)
        return rows[0].payload_schema if rows else None


def load_table() -> ChoreographyTable:
    """Load the canonical table shipped with the package."""
    raw = resources.files("pds.data").joinpath(TABLE_RESOURCE).read_text("utf-8")
    doc = json.loads(raw)
    rows = [
        StepRow(op=op, step=r["step"], sender_role=r["from"],
                receiver_role=r["to"], payload_schema=r["payload"])
        for op, op_rows in doc["ops"].items()
        for r in op_rows
    ]
    return ChoreographyTable(rows, version=doc["version"])


_default_table: ChoreographyTable | None = None


def default_table() -> ChoreographyTable:
    global _default_table
    if _default_table is None:
        _default_table = load_table()
    return _default_table


def validate_payload(schema: dict[str, str], payload: Any) -> str | None:
    """Return None if ``payload`` matches ``schema``, else a description."""
    if not isinstance(payload, dict):
        return "payload is not an object"
    unknown = set(payload) - set(schema)
    if unknown:
        return f"unknown fields {sorted(unknown)}"
    missing = set(schema) - set(payload)
    if missing:
        return f"missing fields {sorted(missing)}"
    for name, kind in schema.items():
        if not _FIELD_CHECKS[kind](payload[name]):
            return f"field {name!r} is not a valid {kind}"
    return None


def validate_step(
    table: ChoreographyTable,
    env: Envelope,
    local_role: str,
    sender_role: str,
) -> tuple[str, str | None]:
    """Check one received envelope against the choreography table.

    Returns ``(ACCEPT, None)`` or ``(reject_reason, detail)`` with
    reason in {unknown_step, wrong_role, bad_schema}.
    """
    if env.op not in OPS or not any(r.op == env.op and r.step == env.step for r in table.rows):
        return REJECT_UNKNOWN_STEP, f"no row for ({env.op}, {env.step})"
    row = table.lookup(env.op, env.step, sender_role)
    if row is None:
        return REJECT_WRONG_ROLE, f"{env.step} not sent by role {sender_role!r}"
    if row.receiver_role != local_role:
        return REJECT_WRONG_ROLE, f"{env.step} not addressed to role {local_role!r}"
    if not is_key(env.choreography_id):
        return REJECT_BAD_SCHEMA, "bad choreography_id"
    problem = validate_payload(row.payload_schema, env.payload)
    if problem is not None:
        return REJECT_BAD_SCHEMA, problem
    return ACCEPT, None


# ---------------------------------------------------------------------------
# Framing
# ---------------------------------------------------------------------------

def encode_frame(env: Envelope) -> bytes:
    """4-byte big-endian length prefix + deterministic JSON body."""
    body = json.dumps(env.to_wire(), sort_keys=True, separators=(",", ":")).encode("utf-8")
    if len(body) > MAX_FRAME_BYTES:
        raise ProtocolError(REJECT_BAD_SCHEMA, f"frame of {len(body)} bytes exceeds cap")
    return struct.pack(">I", len(body)) + body


def decode_frame(frame: bytes) -> Envelope:
    """Inverse of :func:`encode_frame`; rejects length mismatches."""
    if len(frame) < 4:
        raise EncodingError("frame shorter than length prefix")
    (declared,) = struct.unpack(">I", frame[:4])
    body = frame[4:]
    if declared != len(body):
        raise EncodingError(f"declared length {declared} != body length {len(body)}")
    if declared > MAX_FRAME_BYTES:
        raise EncodingError("frame exceeds size cap")
    try:
        obj = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise EncodingError(f"frame body is not JSON: {exc}") from exc
    return Envelope.from_wire(obj)


def chunk_to_wire(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def chunk_from_wire(text: str) -> bytes:
    try:
        return base64.b64decode(text, validate=True)
    except Exception as exc:
        raise EncodingError(f"bad chunk encoding: {exc}") from exc
