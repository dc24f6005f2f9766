"""Index node: maps master keys to the (storage node, partial key) list.

It never sees metadata, key references, identities-as-owners, or chunk
bytes; delete is a tombstone on the master key, which kills every key
reference at once without touching any other node.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

from ..keyspace import Hkr
from ..kvstore import RecordStatus
from .base import Node, NodeConfig
from ..transport.base import NodePort

logger = logging.getLogger(__name__)

FAIL_UNKNOWN = "unknown"
FAIL_DELETED = "deleted"


@dataclass
class IndexRecord:
    """Master-key entry; ``entries`` is in chunk-index order."""

    mk: str
    entries: list[tuple[str, str]]
    status: str

    def value_bytes(self) -> bytes:
        return json.dumps({"entries": [list(e) for e in self.entries]},
                          sort_keys=True).encode("utf-8")

    @classmethod
    def from_value(cls, mk: str, value: bytes, status: str) -> "IndexRecord":
        doc = json.loads(value.decode("utf-8"))
        return cls(mk=mk, entries=[tuple(e) for e in doc["entries"]], status=status)


class IndexNode(Node):
    role = "index"

    def __init__(self, config: NodeConfig, port: NodePort, table=None):
        super().__init__(config, port, table)
        self._handlers = {
            ("store", "IndexPut"): self._on_index_put,
            ("retrieve", "ReadAuth"): self._on_read_auth,
            ("update", "UpdateAuth"): self._on_update_auth,
            ("delete", "DeleteCmd"): self._on_delete_cmd,
        }

    def _load(self, mk: str) -> IndexRecord | None:
        rec = self.store.get(mk)
        if rec is None:
            return None
        return IndexRecord.from_value(mk, rec.value, rec.status.value)

    def _on_index_put(self, env) -> None:
        mk = env.payload["mk"]
        if mk in self.store:
            # the audit node is the sole minter; a duplicate is a protocol violation
            self.send("store", "IndexPutAck", env.sender,
                      {"ok": False, "reason": "duplicate_mk"}, env.choreography_id)
            return
        record = IndexRecord(mk=mk, entries=[tuple(e) for e in env.payload["entries"]],
                             status="active")
        self.store.put(mk, record.value_bytes())
        self.send("store", "IndexPutAck", env.sender, {"ok": True, "reason": None},
                  env.choreography_id)

    def _fan_out(self, env, op: str, step: str) -> None:
        """Route one authorized read/update to every storage node holding
        a chunk of the master key."""
        mk = env.payload["mk"]
        hkr = Hkr.from_wire(env.payload["hkr"])
        rec = self._load(mk)
        if rec is None:
            self._fail(env, op, hkr, FAIL_UNKNOWN)
            return
        if rec.status != RecordStatus.ACTIVE.value:
            self._fail(env, op, hkr, FAIL_DELETED)
            return
        total = len(rec.entries)
        for i, (sn_addr, pk) in enumerate(rec.entries, start=1):
            self.send(op, step, sn_addr,
                      {"dp": env.payload["dp"], "hkr": hkr.to_wire(),
                       "pk": pk, "index": i, "total": total},
                      env.choreography_id)

    def _fail(self, env, op: str, hkr: Hkr, reason: str) -> None:
        self.send(op, "ReadFailed", hkr.pn_location,
                  {"hkr": hkr.to_wire(), "reason": reason}, env.choreography_id)

    def _on_read_auth(self, env) -> None:
        self._fan_out(env, "retrieve", "ChunkGet")

    def _on_update_auth(self, env) -> None:
        self._fan_out(env, "update", "UpdatePrepare")

    def _on_delete_cmd(self, env) -> None:
        mk = env.payload["mk"]
        rec = self.store.get(mk)
        if rec is None:
            self.send("delete", "DeleteAck", env.sender,
                      {"ok": False, "reason": "unknown_mk"}, env.choreography_id)
            return
        if rec.status is RecordStatus.ACTIVE:
            self.store.invalidate(mk)
        # second delete of the same master key is an idempotent success
        self.send("delete", "DeleteAck", env.sender, {"ok": True, "reason": None},
                  env.choreography_id)
