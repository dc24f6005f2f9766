"""Node plumbing shared by all four roles.

Each node owns one key-value store and runs as a serial message handler:
the transport guarantees that ``handle`` and timer callbacks never
overlap, so no node-internal locking exists. Multi-hop flows are
continuation-style: a handler parks state in a pending table and a later
message (or a timeout) picks it up.
"""

from __future__ import annotations

import logging
import random
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from ..errors import TransportError
from ..keyspace import KeySource, encode_hex, gen_key
from ..kvstore import KvStore
from ..protocol import (
    ACCEPT,
    ROLE_AUDIT,
    ROLE_INDEX,
    ROLE_PROCESSING,
    ROLE_STORAGE,
    ChoreographyTable,
    Envelope,
    default_table,
)
from ..protocol import validate_step as _validate_step
from ..transport.base import NodePort

logger = logging.getLogger(__name__)

OUTCOME_OK = "ok"
OUTCOME_DENIED = "denied"
OUTCOME_FAILED = "failed"
OUTCOME_TIMEOUT = "timeout"


@dataclass
class OpResult:
    """Terminal result of one processing-node operation."""

    op: str
    alias: str | None
    outcome: str
    reason: str | None = None
    value: bytes | None = None
    detail: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.outcome == OUTCOME_OK

    def brief(self) -> tuple:
        """Backend-comparable summary (no values, no timings)."""
        return (self.op, self.alias, self.outcome, self.reason)


class OpHandle:
    """Future-like completion handle for one operation instance."""

    def __init__(self, op: str, alias: str | None):
        self.op = op
        self.alias = alias
        self.result: OpResult | None = None
        self._event = threading.Event()

    @property
    def done(self) -> bool:
        return self.result is not None

    def resolve(self, result: OpResult) -> None:
        if self.result is None:
            self.result = result
            self._event.set()

    def wait(self, timeout_s: float | None = None) -> OpResult | None:
        self._event.wait(timeout_s)
        return self.result


@dataclass
class NodeConfig:
    """Static configuration of one node.

    Addresses are logical node ids; the TCP backend resolves them through
    its peer directory. ``seed`` makes the node's key/nonce generation
    reproducible; leave None for entropy seeding in production.
    """

    role: str
    node_id: str
    data_dir: Path
    audit_addr: str | None = None
    index_addr: str | None = None
    storage_addrs: tuple[str, ...] = ()
    identity_name: str | None = None
    timeout_ms: int = 30_000
    default_chunks: int = 3
    seed: int | None = None
    strict: bool = False


class Node:
    """Base message handler over one kvstore."""

    role: str = ""

    def __init__(self, config: NodeConfig, port: NodePort,
                 table: ChoreographyTable | None = None):
        assert config.role == self.role, f"config role {config.role!r} != {self.role!r}"
        self.config = config
        self.port = port
        self.address = config.node_id
        self.table = table or default_table()
        Path(config.data_dir).mkdir(parents=True, exist_ok=True)
        if config.seed is not None:
            # position sidecar keeps the key stream continuing across restarts
            state_path = Path(config.data_dir) / f"{self.role}-{config.node_id}.rngpos"
            self.rng = KeySource(f"{config.seed}:{config.node_id}", state_path)
        else:
            self.rng = random.SystemRandom()
        self.store = KvStore(Path(config.data_dir) / f"{self.role}-{config.node_id}.log")
        self._handlers: dict[tuple[str, str], Callable[[Envelope], None]] = {}

    # -- peers ---------------------------------------------------------------

    def role_of(self, address: str) -> str:
        """Role of a peer address. Infrastructure nodes are enumerated in
        the config; anything else is a processing node (the open class)."""
        if address == self.config.audit_addr:
            return ROLE_AUDIT
        if address == self.config.index_addr:
            return ROLE_INDEX
        if address in self.config.storage_addrs:
            return ROLE_STORAGE
        return ROLE_PROCESSING

    # -- messaging -------------------------------------------------------------

    def handle(self, env: Envelope) -> None:
        verdict, detail = _validate_step(self.table, env, self.role, self.role_of(env.sender))
        if verdict != ACCEPT:
            logger.warning("%s: rejected %s/%s from %s: %s (%s)",
                           self.address, env.op, env.step, env.sender, verdict, detail)
            return
        fn = self._handlers.get((env.op, env.step))
        if fn is None:
            logger.warning("%s: no handler for %s/%s", self.address, env.op, env.step)
            return
        try:
            fn(env)
        except Exception:
            logger.exception("%s: handler %s/%s failed", self.address, env.op, env.step)
            if self.config.strict:
                raise

    def send(self, op: str, step: str, receiver: str, payload: dict,
             choreography_id: str) -> bool:
        env = Envelope(choreography_id=choreography_id, op=op, step=step,
                       sender=self.address, receiver=receiver, payload=payload)
        try:
            self.port.send(env)
            return True
        except TransportError as exc:
            logger.warning("%s: send %s/%s to %s failed: %s",
                           self.address, op, step, receiver, exc)
            return False

    def new_nonce(self) -> str:
        return encode_hex(gen_key(self.rng))

    def close(self) -> None:
        self.store.close()
