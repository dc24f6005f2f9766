"""Processing node: splits, recombines, and uses private data.

The persistent alias table holds only aliases, key references, and cached
metadata; retrieved data exists solely in transient pending state and in
the caller's result. There is deliberately no API that writes private
data to the node's store: copying data means sharing it, and derived data
goes back in through a fresh store operation.

Operations are two-phase: ``begin_*`` sends the first hop and returns an
:class:`OpHandle`; later messages (or a timeout) resolve it. Under the
simulated transport the caller drives the scheduler until the handle is
done; under TCP the caller blocks on the handle.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

from ..errors import ParameterError
from ..keyspace import Identity, make_hkr
from ..kvstore import RecordStatus
from ..protocol import chunk_from_wire, chunk_to_wire, validate_metadata
from ..secret_split import MAX_CHUNKS, MIN_CHUNKS, Chunk, recombine, split
from .base import (
    Node,
    NodeConfig,
    OUTCOME_DENIED,
    OUTCOME_FAILED,
    OUTCOME_OK,
    OUTCOME_TIMEOUT,
    OpHandle,
    OpResult,
)
from ..transport.base import NodePort

logger = logging.getLogger(__name__)


@dataclass
class _Pending:
    """In-flight operation state; discarded on completion or timeout."""

    op: str
    alias: str
    handle: OpHandle
    kr: str | None = None
    mk: str | None = None
    expected_digest: str | None = None
    data: bytes | None = None
    md: dict | None = None
    n: int | None = None
    total: int | None = None
    # store: index -> (sn_addr, pk); retrieve: index -> (chunk, generation)
    # update: index -> sn_addr announced ready, then acked index set
    placements: dict[int, tuple[str, str]] = field(default_factory=dict)
    received: dict[int, tuple[bytes, int]] = field(default_factory=dict)
    ready: dict[int, str] = field(default_factory=dict)
    acked: set[int] = field(default_factory=set)
    retried: bool = False


class ProcessingNode(Node):
    role = "processing"

    def __init__(self, config: NodeConfig, port: NodePort, table=None):
        if not config.identity_name:
            raise ParameterError("processing node needs an identity name")
        super().__init__(config, port, table)
        self.identity = Identity(name=config.identity_name, location=config.node_id)
        self._pending: dict[str, _Pending] = {}
        self.stats = {
            "mixed_generation_retries": 0,
            "cross_group_recombinations": 0,
            "stale_deliveries_dropped": 0,
            "grants_received": 0,
        }
        self._handlers = {
            ("store", "StoreGrant"): self._on_store_grant,
            ("store", "ChunkPutAck"): self._on_chunk_put_ack,
            ("store", "IndexPutAck"): self._on_index_put_ack,
            ("retrieve", "ChunkDeliver"): self._on_chunk_deliver,
            ("retrieve", "ReadDenied"): self._on_denied,
            ("retrieve", "ReadFailed"): self._on_failed,
            ("update", "UpdateReady"): self._on_update_ready,
            ("update", "ChunkReplaceAck"): self._on_replace_ack,
            ("update", "ReadDenied"): self._on_denied,
            ("update", "ReadFailed"): self._on_failed,
            ("delete", "DeleteAck"): self._on_delete_ack,
            ("share", "ShareGrant"): self._on_share_grant,
            ("share", "ShareAck"): self._on_share_ack,
            ("revoke", "RevokeAck"): self._on_revoke_ack,
        }

    # -- alias table ---------------------------------------------------------

    def aliases(self) -> dict[str, dict]:
        """Active alias -> {kr, md} map."""
        out = {}
        for alias, rec in self.store.items():
            if rec.status is RecordStatus.ACTIVE:
                out[alias] = json.loads(rec.value.decode("utf-8"))
        return out

    def _alias_get(self, alias: str) -> dict:
        rec = self.store.get(alias)
        if rec is None or rec.status is not RecordStatus.ACTIVE:
            raise ParameterError(f"unknown alias {alias!r}")
        return json.loads(rec.value.decode("utf-8"))

    def _alias_put(self, alias: str, kr: str, md: dict) -> None:
        self.store.put(alias, json.dumps({"kr": kr, "md": md},
                                         sort_keys=True).encode("utf-8"))

    # -- operation entry points -----------------------------------------------

    def begin_store(self, alias: str, data: bytes, md: dict[str, str] | None = None,
                    n: int | None = None) -> OpHandle:
        md = validate_metadata(dict(md or {}))
        n = n if n is not None else self.config.default_chunks
        if not MIN_CHUNKS <= n <= MAX_CHUNKS:
            raise ParameterError(f"chunk count must be in {MIN_CHUNKS}..{MAX_CHUNKS}")
        if self.store.get(alias) is not None and \
                self.store.get(alias).status is RecordStatus.ACTIVE:
            raise ParameterError(f"alias {alias!r} already in use")
        if len(self.config.storage_addrs) < n:
            raise ParameterError(
                f"need {n} storage nodes, only {len(self.config.storage_addrs)} known")
        if not data:
            raise ParameterError("cannot store empty data")
        handle, chor = self._begin("store", alias)
        self._pending[chor] = _Pending(op="store", alias=alias, handle=handle,
                                       data=data, md=md, n=n)
        self.send("store", "StoreInit", self.config.audit_addr,
                  {"do": self.identity.to_wire(), "md": md}, chor)
        return handle

    def begin_retrieve(self, alias: str) -> OpHandle:
        entry = self._alias_get(alias)
        handle, chor = self._begin("retrieve", alias)
        self._start_retrieve(chor, handle, alias, entry["kr"], retried=False)
        return handle

    def begin_update(self, alias: str, data: bytes) -> OpHandle:
        if not data:
            raise ParameterError("cannot update to empty data")
        entry = self._alias_get(alias)
        handle, chor = self._begin("update", alias)
        kr = entry["kr"]
        self._pending[chor] = _Pending(
            op="update", alias=alias, handle=handle, kr=kr, data=data,
            expected_digest=make_hkr(kr, self.address).kr_digest)
        self.send("update", "UpdateReq", self.config.audit_addr,
                  {"dp": self.identity.to_wire(), "kr": kr}, chor)
        return handle

    def begin_delete(self, alias: str) -> OpHandle:
        entry = self._alias_get(alias)
        handle, chor = self._begin("delete", alias)
        self._pending[chor] = _Pending(op="delete", alias=alias, handle=handle,
                                       kr=entry["kr"])
        self.send("delete", "DeleteReq", self.config.audit_addr,
                  {"do": self.identity.to_wire(), "kr": entry["kr"]}, chor)
        return handle

    def begin_share(self, alias: str, grantee: Identity,
                    grant_alias: str | None = None) -> OpHandle:
        entry = self._alias_get(alias)
        handle, chor = self._begin("share", alias)
        self._pending[chor] = _Pending(op="share", alias=alias, handle=handle,
                                       kr=entry["kr"])
        self.send("share", "ShareReq", self.config.audit_addr,
                  {"kr1": entry["kr"], "dp2": grantee.to_wire(),
                   "alias": grant_alias or alias}, chor)
        return handle

    def begin_revoke(self, alias: str, revokee: Identity) -> OpHandle:
        entry = self._alias_get(alias)
        handle, chor = self._begin("revoke", alias)
        self._pending[chor] = _Pending(op="revoke", alias=alias, handle=handle,
                                       kr=entry["kr"])
        self.send("revoke", "RevokeReq", self.config.audit_addr,
                  {"kr1": entry["kr"], "do": self.identity.to_wire(),
                   "dp2": revokee.to_wire()}, chor)
        return handle

    def _begin(self, op: str, alias: str) -> tuple[OpHandle, str]:
        handle = OpHandle(op, alias)
        chor = self.new_nonce()
        self.port.call_later(self.config.timeout_ms, lambda c=chor: self._expire(c))
        return handle, chor

    def _start_retrieve(self, chor: str, handle: OpHandle, alias: str, kr: str,
                        retried: bool) -> None:
        self._pending[chor] = _Pending(
            op="retrieve", alias=alias, handle=handle, kr=kr, retried=retried,
            expected_digest=make_hkr(kr, self.address).kr_digest)
        self.send("retrieve", "ReadReq", self.config.audit_addr,
                  {"dp": self.identity.to_wire(), "kr": kr}, chor)

    # -- completion ----------------------------------------------------------

    def _expire(self, chor: str) -> None:
        p = self._pending.pop(chor, None)
        if p is None:
            return
        detail = {}
        if p.op == "retrieve":
            detail = {"received": len(p.received), "total": p.total}
        p.handle.resolve(OpResult(op=p.op, alias=p.alias, outcome=OUTCOME_TIMEOUT,
                                  reason="timeout", detail=detail))

    def _resolve(self, chor: str, outcome: str, reason: str | None = None,
                 value: bytes | None = None, detail: dict | None = None) -> None:
        p = self._pending.pop(chor, None)
        if p is None:
            return
        p.handle.resolve(OpResult(op=p.op, alias=p.alias, outcome=outcome,
                                  reason=reason, value=value, detail=detail or {}))

    def _get(self, env, *ops: str) -> _Pending | None:
        p = self._pending.get(env.choreography_id)
        if p is None or (ops and p.op not in ops):
            self.stats["stale_deliveries_dropped"] += 1
            return None
        return p

    # -- store flow ------------------------------------------------------------

    def _on_store_grant(self, env) -> None:
        p = self._get(env, "store")
        if p is None:
            return
        p.kr, p.mk = env.payload["kr"], env.payload["mk"]
        chunks = split(p.data, p.n, self.rng)
        targets = self.rng.sample(sorted(self.config.storage_addrs), p.n)
        p.placements = {}
        for chunk, sn in zip(chunks, targets):
            p.placements[chunk.index] = (sn, "")
            self.send("store", "ChunkPut", sn,
                      {"chunk": chunk_to_wire(chunk.data), "index": chunk.index,
                       "total": chunk.total}, env.choreography_id)

    def _on_chunk_put_ack(self, env) -> None:
        p = self._get(env, "store")
        if p is None:
            return
        index = env.payload["index"]
        if index not in p.placements:
            return
        p.placements[index] = (env.sender, env.payload["pk"])
        if all(pk for _, pk in p.placements.values()) and len(p.placements) == p.n:
            entries = [list(p.placements[i]) for i in range(1, p.n + 1)]
            self.send("store", "IndexPut", self.config.index_addr,
                      {"mk": p.mk, "entries": entries}, env.choreography_id)

    def _on_index_put_ack(self, env) -> None:
        p = self._get(env, "store")
        if p is None:
            return
        if not env.payload["ok"]:
            self._resolve(env.choreography_id, OUTCOME_FAILED, env.payload["reason"])
            return
        self._alias_put(p.alias, p.kr, p.md)
        # private data leaves memory with the pending entry
        self._resolve(env.choreography_id, OUTCOME_OK, detail={"kr": p.kr})

    # -- retrieve flow -----------------------------------------------------------

    def _on_denied(self, env) -> None:
        p = self._get(env, "retrieve", "update")
        if p is None:
            return
        self._resolve(env.choreography_id, OUTCOME_DENIED, env.payload["reason"])

    def _on_failed(self, env) -> None:
        p = self._get(env, "retrieve", "update")
        if p is None:
            return
        self._resolve(env.choreography_id, OUTCOME_FAILED, env.payload["reason"])

    def _on_chunk_deliver(self, env) -> None:
        p = self._get(env, "retrieve")
        if p is None:
            return
        if env.payload["hkr"]["kr_digest"] != p.expected_digest:
            self.stats["stale_deliveries_dropped"] += 1
            return
        total = env.payload["total"]
        if p.total is None:
            p.total = total
        elif p.total != total:
            self._resolve(env.choreography_id, OUTCOME_FAILED, "inconsistent_total")
            return
        p.received[env.payload["index"]] = (chunk_from_wire(env.payload["chunk"]),
                                            env.payload["generation"])
        if len(p.received) < p.total:
            return
        generations = {gen for _, gen in p.received.values()}
        if len(generations) > 1:
            # an update raced this read; chunks span epochs, retry once fresh
            self.stats["mixed_generation_retries"] += 1
            self._pending.pop(env.choreography_id)
            if p.retried:
                p.handle.resolve(OpResult(op=p.op, alias=p.alias,
                                          outcome=OUTCOME_FAILED,
                                          reason="mixed_generations"))
                return
            chor = self.new_nonce()
            self.port.call_later(self.config.timeout_ms, lambda c=chor: self._expire(c))
            self._start_retrieve(chor, p.handle, p.alias, p.kr, retried=True)
            return
        chunks = [Chunk(data=data, index=i, total=p.total)
                  for i, (data, _) in sorted(p.received.items())]
        data = recombine(chunks)
        self._resolve(env.choreography_id, OUTCOME_OK, value=data,
                      detail={"generation": generations.pop()})

    # -- update flow -------------------------------------------------------------

    def _on_update_ready(self, env) -> None:
        p = self._get(env, "update")
        if p is None:
            return
        if env.payload["hkr"]["kr_digest"] != p.expected_digest:
            self.stats["stale_deliveries_dropped"] += 1
            return
        total = env.payload["total"]
        if p.total is None:
            p.total = total
        elif p.total != total:
            self._resolve(env.choreography_id, OUTCOME_FAILED, "inconsistent_total")
            return
        p.ready[env.payload["index"]] = env.payload["sn_addr"]
        if len(p.ready) < p.total:
            return
        # replacements go out only once every storage node is parked,
        # so an aborted update never leaves a partial write behind
        chunks = split(p.data, p.total, self.rng)
        hkr = make_hkr(p.kr, self.address)
        for chunk in chunks:
            self.send("update", "ChunkReplace", p.ready[chunk.index],
                      {"hkr": hkr.to_wire(), "index": chunk.index,
                       "chunk": chunk_to_wire(chunk.data)}, env.choreography_id)

    def _on_replace_ack(self, env) -> None:
        p = self._get(env, "update")
        if p is None:
            return
        p.acked.add(env.payload["index"])
        if p.total is not None and len(p.acked) == p.total:
            self._resolve(env.choreography_id, OUTCOME_OK)

    # -- delete / share / revoke ----------------------------------------------------

    def _on_delete_ack(self, env) -> None:
        p = self._get(env, "delete")
        if p is None:
            return
        if env.payload["ok"]:
            self._resolve(env.choreography_id, OUTCOME_OK)
        else:
            self._resolve(env.choreography_id, OUTCOME_DENIED, env.payload["reason"])

    def _on_share_ack(self, env) -> None:
        p = self._get(env, "share")
        if p is None:
            return
        if env.payload["kr2_issued"]:
            self._resolve(env.choreography_id, OUTCOME_OK)
        else:
            self._resolve(env.choreography_id, OUTCOME_DENIED, env.payload["reason"])

    def _on_share_grant(self, env) -> None:
        """Unsolicited grant from the audit node: record the new reference
        under a free alias. The grantor's own reference never appears."""
        alias = env.payload["alias"]
        chosen = alias
        suffix = 2
        while self.store.get(chosen) is not None:
            chosen = f"{alias}-{suffix}"
            suffix += 1
        self._alias_put(chosen, env.payload["kr2"], env.payload["md"])
        self.stats["grants_received"] += 1
        logger.info("%s: granted alias %r", self.address, chosen)

    def _on_revoke_ack(self, env) -> None:
        p = self._get(env, "revoke")
        if p is None:
            return
        if env.payload["reason"] in ("not_owner", "unknown_kr", "revoked"):
            self._resolve(env.choreography_id, OUTCOME_DENIED, env.payload["reason"])
        else:
            self._resolve(env.choreography_id, OUTCOME_OK,
                          detail={"found": env.payload["found"]})
