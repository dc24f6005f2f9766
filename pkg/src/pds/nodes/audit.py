"""Audit node: the only resolver of key references.

Its store maps each key reference to (master key, metadata, data owner,
data processor). It authorizes reads/updates, mints keys for stores,
issues new references on share, and tombstones references on revoke.
Revocation never touches the index or storage layers: a dead reference is
simply no longer resolved.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

from ..errors import EncodingError
from ..keyspace import Identity, fresh_key, make_hkr
from ..kvstore import RecordStatus
from ..protocol import validate_metadata
from .base import Node, NodeConfig, logger as _base_logger  # noqa: F401
from ..transport.base import NodePort

logger = logging.getLogger(__name__)

DENY_UNKNOWN_KR = "unknown_kr"
DENY_REVOKED = "revoked"
DENY_WRONG_PROCESSOR = "wrong_processor"
DENY_NOT_OWNER = "not_owner"


@dataclass
class AuditRecord:
    """One key-reference entry. ``status`` reflects the store-level
    tombstone: a revoked reference is an invalidated record."""

    kr: str
    mk: str
    md: dict[str, str]
    do: Identity
    dp: Identity
    status: str

    @property
    def is_initial(self) -> bool:
        # owner's original reference: owner stored it for itself
        return self.do.name == self.dp.name

    def value_bytes(self) -> bytes:
        doc = {"mk": self.mk, "md": self.md,
               "do": self.do.to_wire(), "dp": self.dp.to_wire()}
        return json.dumps(doc, sort_keys=True).encode("utf-8")

    @classmethod
    def from_value(cls, kr: str, value: bytes, status: str) -> "AuditRecord":
        doc = json.loads(value.decode("utf-8"))
        return cls(kr=kr, mk=doc["mk"], md=doc["md"],
                   do=Identity.from_wire(doc["do"]),
                   dp=Identity.from_wire(doc["dp"]), status=status)


class AuditNode(Node):
    role = "audit"

    def __init__(self, config: NodeConfig, port: NodePort, table=None):
        super().__init__(config, port, table)
        self._minted_mks: set[str] = set()
        # fast path for the revoke search; kvstore.scan is the oracle
        self._grant_index: dict[tuple[str, str, str], set[str]] = {}
        self._pending_deletes: dict[str, str] = {}
        self._rebuild_indexes()
        self._handlers = {
            ("store", "StoreInit"): self._on_store_init,
            ("retrieve", "ReadReq"): self._on_read_req,
            ("update", "UpdateReq"): self._on_update_req,
            ("delete", "DeleteReq"): self._on_delete_req,
            ("delete", "DeleteAck"): self._on_delete_ack,
            ("share", "ShareReq"): self._on_share_req,
            ("revoke", "RevokeReq"): self._on_revoke_req,
        }

    # -- state ------------------------------------------------------------

    def _rebuild_indexes(self) -> None:
        for kr, rec in self.store.items():
            audit = AuditRecord.from_value(kr, rec.value, rec.status.value)
            self._minted_mks.add(audit.mk)
            if rec.status is RecordStatus.ACTIVE:
                self._index_add(audit)

    def _index_key(self, mk: str, do: Identity, dp: Identity) -> tuple[str, str, str]:
        return (mk, do.name, dp.name)

    def _index_add(self, rec: AuditRecord) -> None:
        self._grant_index.setdefault(self._index_key(rec.mk, rec.do, rec.dp), set()).add(rec.kr)

    def _index_remove(self, rec: AuditRecord) -> None:
        krs = self._grant_index.get(self._index_key(rec.mk, rec.do, rec.dp))
        if krs:
            krs.discard(rec.kr)
            if not krs:
                del self._grant_index[self._index_key(rec.mk, rec.do, rec.dp)]

    def _load(self, kr: str) -> AuditRecord | None:
        rec = self.store.get(kr)
        if rec is None:
            return None
        return AuditRecord.from_value(kr, rec.value, rec.status.value)

    def _fresh_mk(self) -> str:
        mk = fresh_key(self.rng, lambda k: k in self._minted_mks)
        self._minted_mks.add(mk)
        return mk

    def _fresh_kr(self) -> str:
        return fresh_key(self.rng, lambda k: k in self.store)

    def grants_for(self, mk: str, do_name: str, dp_name: str) -> list[str]:
        """Active key references matching one (mk, owner, processor) triple."""
        return sorted(self._grant_index.get((mk, do_name, dp_name), set()))

    # -- choreography steps -------------------------------------------------

    def _on_store_init(self, env) -> None:
        do = Identity.from_wire(env.payload["do"])
        try:
            md = validate_metadata(env.payload["md"])
        except EncodingError:
            logger.warning("%s: StoreInit with oversize metadata dropped", self.address)
            return
        mk = self._fresh_mk()
        kr = self._fresh_kr()
        # the storing identity is both owner and processor of its own data
        record = AuditRecord(kr=kr, mk=mk, md=md, do=do, dp=do, status="active")
        self.store.put(kr, record.value_bytes())
        self._index_add(record)
        self.send("store", "StoreGrant", env.sender, {"kr": kr, "mk": mk},
                  env.choreography_id)

    def _authorize(self, env, op: str) -> None:
        """Shared read/update authorization: resolve kr, check holder,
        forward (dp, mk, hkr) to the index node."""
        dp = Identity.from_wire(env.payload["dp"])
        kr = env.payload["kr"]
        rec = self._load(kr)
        if rec is None:
            self._deny(env, op, kr, DENY_UNKNOWN_KR)
            return
        if rec.status != RecordStatus.ACTIVE.value:
            self._deny(env, op, kr, DENY_REVOKED)
            return
        if dp.name != rec.dp.name:
            self._deny(env, op, kr, DENY_WRONG_PROCESSOR)
            return
        hkr = make_hkr(kr, dp.location)
        step = "ReadAuth" if op == "retrieve" else "UpdateAuth"
        self.send(op, step, self.config.index_addr,
                  {"dp": dp.to_wire(), "mk": rec.mk, "hkr": hkr.to_wire()},
                  env.choreography_id)

    def _deny(self, env, op: str, kr: str, reason: str) -> None:
        self.send(op, "ReadDenied", env.sender, {"kr": kr, "reason": reason},
                  env.choreography_id)

    def _on_read_req(self, env) -> None:
        self._authorize(env, "retrieve")

    def _on_update_req(self, env) -> None:
        self._authorize(env, "update")

    def _on_delete_req(self, env) -> None:
        do = Identity.from_wire(env.payload["do"])
        kr = env.payload["kr"]
        rec = self._load(kr)
        if rec is None:
            self._delete_ack(env.sender, env.choreography_id, False, DENY_UNKNOWN_KR)
            return
        if rec.status != RecordStatus.ACTIVE.value:
            self._delete_ack(env.sender, env.choreography_id, False, DENY_REVOKED)
            return
        if do.name != rec.do.name or env.sender != do.location:
            self._delete_ack(env.sender, env.choreography_id, False, DENY_NOT_OWNER)
            return
        self._pending_deletes[env.choreography_id] = env.sender
        self.port.call_later(self.config.timeout_ms,
                             lambda c=env.choreography_id: self._pending_deletes.pop(c, None))
        self.send("delete", "DeleteCmd", self.config.index_addr, {"mk": rec.mk},
                  env.choreography_id)

    def _on_delete_ack(self, env) -> None:
        requester = self._pending_deletes.pop(env.choreography_id, None)
        if requester is None:
            logger.warning("%s: DeleteAck for unknown choreography", self.address)
            return
        self._delete_ack(requester, env.choreography_id,
                         env.payload["ok"], env.payload["reason"])

    def _delete_ack(self, to: str, chor: str, ok: bool, reason: str | None) -> None:
        self.send("delete", "DeleteAck", to, {"ok": ok, "reason": reason}, chor)

    def _on_share_req(self, env) -> None:
        kr1 = env.payload["kr1"]
        dp2 = Identity.from_wire(env.payload["dp2"])
        alias = env.payload["alias"]
        rec = self._load(kr1)
        if rec is None:
            self._share_ack(env, False, DENY_UNKNOWN_KR)
            return
        if rec.status != RecordStatus.ACTIVE.value:
            self._share_ack(env, False, DENY_REVOKED)
            return
        if env.sender != rec.dp.location:
            self._share_ack(env, False, DENY_WRONG_PROCESSOR)
            return
        kr2 = self._fresh_kr()
        granted = AuditRecord(kr=kr2, mk=rec.mk, md=rec.md, do=rec.do, dp=dp2,
                              status="active")
        self.store.put(kr2, granted.value_bytes())
        self._index_add(granted)
        delivered = self.send("share", "ShareGrant", dp2.location,
                              {"kr2": kr2, "md": rec.md, "alias": alias},
                              env.choreography_id)
        if not delivered:
            # roll the grant back audibly: tombstone, never erase
            self.store.invalidate(kr2)
            self._index_remove(granted)
            self._share_ack(env, False, "grantee_unreachable")
            return
        self._share_ack(env, True, None)

    def _share_ack(self, env, issued: bool, reason: str | None) -> None:
        self.send("share", "ShareAck", env.sender,
                  {"kr2_issued": issued, "reason": reason}, env.choreography_id)

    def _on_revoke_req(self, env) -> None:
        kr1 = env.payload["kr1"]
        do = Identity.from_wire(env.payload["do"])
        dp2 = Identity.from_wire(env.payload["dp2"])
        rec = self._load(kr1)
        if rec is None:
            self._revoke_ack(env, False, DENY_UNKNOWN_KR)
            return
        if rec.status != RecordStatus.ACTIVE.value:
            self._revoke_ack(env, False, DENY_REVOKED)
            return
        if do.name != rec.do.name or env.sender != do.location:
            self._revoke_ack(env, False, DENY_NOT_OWNER)
            return
        targets = self.grants_for(rec.mk, do.name, dp2.name)
        for kr2 in targets:
            victim = self._load(kr2)
            self.store.invalidate(kr2)
            self._index_remove(victim)
        self._revoke_ack(env, bool(targets), None)

    def _revoke_ack(self, env, found: bool, reason: str | None) -> None:
        self.send("revoke", "RevokeAck", env.sender,
                  {"found": found, "reason": reason}, env.choreography_id)
