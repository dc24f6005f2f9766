"""Storage node: holds individual undecipherable chunks under partial keys.

A storage record carries a generation counter bumped on every replace;
deliveries include it so a reader can tell chunks of different update
epochs apart. Update replacements are parked in a transient table keyed
by (kr digest, choreography id, chunk index), because the replace message
itself names no partial key.
"""

from __future__ import annotations

import json
import logging

from ..keyspace import Hkr, fresh_key
from ..kvstore import RecordStatus
from ..protocol import chunk_from_wire, chunk_to_wire
from .base import Node, NodeConfig
from ..transport.base import NodePort

logger = logging.getLogger(__name__)

FAIL_MISSING_CHUNK = "missing_chunk"


class StorageNode(Node):
    role = "storage"

    def __init__(self, config: NodeConfig, port: NodePort, table=None):
        super().__init__(config, port, table)
        # (kr_digest, choreography_id, index) -> pk; transient, never persisted
        self._pending_updates: dict[tuple[str, str, int], str] = {}
        self._handlers = {
            ("store", "ChunkPut"): self._on_chunk_put,
            ("retrieve", "ChunkGet"): self._on_chunk_get,
            ("update", "UpdatePrepare"): self._on_update_prepare,
            ("update", "ChunkReplace"): self._on_chunk_replace,
        }

    def _value(self, chunk: bytes, generation: int) -> bytes:
        return json.dumps({"chunk": chunk_to_wire(chunk), "generation": generation},
                          sort_keys=True).encode("utf-8")

    def _parse(self, value: bytes) -> tuple[bytes, int]:
        doc = json.loads(value.decode("utf-8"))
        return chunk_from_wire(doc["chunk"]), doc["generation"]

    def _on_chunk_put(self, env) -> None:
        chunk = chunk_from_wire(env.payload["chunk"])
        pk = fresh_key(self.rng, lambda k: k in self.store)
        self.store.put(pk, self._value(chunk, generation=1))
        self.send("store", "ChunkPutAck", env.sender,
                  {"pk": pk, "index": env.payload["index"]}, env.choreography_id)

    def _on_chunk_get(self, env) -> None:
        hkr = Hkr.from_wire(env.payload["hkr"])
        rec = self.store.get(env.payload["pk"])
        if rec is None or rec.status is not RecordStatus.ACTIVE:
            self.send("retrieve", "ReadFailed", hkr.pn_location,
                      {"hkr": hkr.to_wire(), "reason": FAIL_MISSING_CHUNK},
                      env.choreography_id)
            return
        chunk, generation = self._parse(rec.value)
        # delivery goes to the requester named inside the tag, not to the
        # index node that routed the request
        self.send("retrieve", "ChunkDeliver", hkr.pn_location,
                  {"hkr": hkr.to_wire(), "index": env.payload["index"],
                   "total": env.payload["total"], "chunk": chunk_to_wire(chunk),
                   "generation": generation},
                  env.choreography_id)

    def _on_update_prepare(self, env) -> None:
        hkr = Hkr.from_wire(env.payload["hkr"])
        pk = env.payload["pk"]
        index = env.payload["index"]
        if self.store.get(pk) is None:
            self.send("update", "ReadFailed", hkr.pn_location,
                      {"hkr": hkr.to_wire(), "reason": FAIL_MISSING_CHUNK},
                      env.choreography_id)
            return
        key = (hkr.kr_digest, env.choreography_id, index)
        self._pending_updates[key] = pk
        self.port.call_later(self.config.timeout_ms,
                             lambda k=key: self._expire_pending(k))
        self.send("update", "UpdateReady", hkr.pn_location,
                  {"hkr": hkr.to_wire(), "index": index,
                   "total": env.payload["total"], "sn_addr": self.address},
                  env.choreography_id)

    def _expire_pending(self, key) -> None:
        if self._pending_updates.pop(key, None) is not None:
            logger.info("%s: pending update %s expired", self.address, key[2])

    def _on_chunk_replace(self, env) -> None:
        hkr = Hkr.from_wire(env.payload["hkr"])
        index = env.payload["index"]
        key = (hkr.kr_digest, env.choreography_id, index)
        pk = self._pending_updates.pop(key, None)
        if pk is None:
            logger.warning("%s: stale-update replace for index %d dropped",
                           self.address, index)
            return
        rec = self.store.get(pk)
        _, generation = self._parse(rec.value)
        chunk = chunk_from_wire(env.payload["chunk"])
        self.store.put(pk, self._value(chunk, generation + 1))
        self.send("update", "ChunkReplaceAck", env.sender,
                  {"hkr": hkr.to_wire(), "index": index}, env.choreography_id)
