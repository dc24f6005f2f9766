"""Build and drive whole clusters on either transport backend.

A cluster is one audit node, one index node, and any number of storage
and processing nodes. Under simulation the caller drives the virtual
scheduler until operation handles resolve; under TCP the nodes run on
their own threads and the caller blocks.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import PdsError
from ..nodes import AuditNode, IndexNode, Node, OpHandle, ProcessingNode, StorageNode
from ..nodes.base import NodeConfig
from ..protocol import ROLE_AUDIT, ROLE_INDEX, ROLE_PROCESSING, ROLE_STORAGE
from ..transport import SimNet, SimNetConfig, TcpNode, Transcript

logger = logging.getLogger(__name__)

_NODE_CLASSES = {
    ROLE_AUDIT: AuditNode,
    ROLE_INDEX: IndexNode,
    ROLE_STORAGE: StorageNode,
    ROLE_PROCESSING: ProcessingNode,
}


@dataclass
class ClusterSpec:
    """Roster of one cluster; processing maps node id to identity name."""

    audit: str = "an-1"
    index: str = "in-1"
    storage: tuple[str, ...] = ("sn-1", "sn-2", "sn-3")
    processing: dict[str, str] = field(default_factory=lambda: {"pn-1": "alice"})
    seed: int | None = 0
    timeout_ms: int = 30_000
    default_chunks: int = 3

    def node_config(self, role: str, node_id: str, data_dir: Path,
                    strict: bool = False) -> NodeConfig:
        return NodeConfig(
            role=role,
            node_id=node_id,
            data_dir=data_dir,
            audit_addr=self.audit,
            index_addr=self.index,
            storage_addrs=tuple(self.storage),
            identity_name=self.processing.get(node_id),
            timeout_ms=self.timeout_ms,
            default_chunks=self.default_chunks,
            seed=self.seed,
            strict=strict,
        )

    def roles(self) -> dict[str, str]:
        out = {self.audit: ROLE_AUDIT, self.index: ROLE_INDEX}
        out.update({s: ROLE_STORAGE for s in self.storage})
        out.update({p: ROLE_PROCESSING for p in self.processing})
        return out


def cluster_from_roster(nodes: list[dict], **kwargs) -> ClusterSpec:
    """Build a spec from a scenario-style node list."""
    audit = index = None
    storage: list[str] = []
    processing: dict[str, str] = {}
    for entry in nodes:
        role, node_id = entry["role"], entry["id"]
        if role == ROLE_AUDIT:
            audit = node_id
        elif role == ROLE_INDEX:
            index = node_id
        elif role == ROLE_STORAGE:
            storage.append(node_id)
        elif role == ROLE_PROCESSING:
            processing[node_id] = entry.get("identity", node_id)
        else:
            raise PdsError(f"unknown role {role!r}")
    if audit is None or index is None or not storage or not processing:
        raise PdsError("cluster needs an audit node, an index node, storage and processing nodes")
    return ClusterSpec(audit=audit, index=index, storage=tuple(storage),
                       processing=processing, **kwargs)


class SimCluster:
    """All nodes of one cluster wired to a shared deterministic scheduler."""

    def __init__(self, spec: ClusterSpec, data_dir: str | Path,
                 net_config: SimNetConfig | None = None,
                 transcript_path: str | Path | None = None,
                 strict: bool = True, transcript_full: bool = True):
        self.spec = spec
        self.data_dir = Path(data_dir)
        self.transcript = Transcript(transcript_path, full_payloads=transcript_full)
        self.net = SimNet(net_config or SimNetConfig(seed=spec.seed or 0), self.transcript)
        self.nodes: dict[str, Node] = {}
        self.pns: dict[str, ProcessingNode] = {}
        self._strict = strict
        for node_id, role in spec.roles().items():
            self._spawn(role, node_id)

    def _spawn(self, role: str, node_id: str) -> Node:
        config = self.spec.node_config(role, node_id, self.data_dir, strict=self._strict)
        node = _NODE_CLASSES[role](config, self.net.port(node_id))
        self.net.register(node_id, node.handle)
        self.nodes[node_id] = node
        if role == ROLE_PROCESSING:
            self.pns[config.identity_name] = node
        return node

    def pn(self, identity_name: str) -> ProcessingNode:
        return self.pns[identity_name]

    def run(self, handles: OpHandle | list[OpHandle], settle: bool = True) -> list:
        """Drive the scheduler until every handle resolves; then drain
        in-flight deliveries (e.g. a share grant overtaken by its ack)."""
        if isinstance(handles, OpHandle):
            handles = [handles]
        self.net.run_until(lambda: all(h.done for h in handles))
        unresolved = [h for h in handles if not h.done]
        if unresolved:
            raise PdsError(f"{len(unresolved)} operations never resolved")
        if settle:
            cfg = self.net.config
            self.net.settle(cfg.latency_max_ms + cfg.reorder_window_ms + 2)
        return [h.result for h in handles]

    def kill_restart(self, node_id: str) -> Node:
        """Crash one node: in-memory and transient state is lost, the
        store log is replayed on restart."""
        node = self.nodes.pop(node_id)
        role = node.role
        self.net.unregister(node_id)
        node.close()
        return self._spawn(role, node_id)

    def dumps(self) -> dict[str, dict]:
        return {
            node_id: {"role": node.role, "records": node.store.dump()}
            for node_id, node in sorted(self.nodes.items())
        }

    def close(self) -> None:
        for node in self.nodes.values():
            node.close()
        self.transcript.close()


class TcpCluster:
    """Same roster on real sockets (loopback)."""

    def __init__(self, spec: ClusterSpec, data_dir: str | Path,
                 transcript_path: str | Path | None = None,
                 host: str = "127.0.0.1"):
        self.spec = spec
        self.data_dir = Path(data_dir)
        self.transcript = Transcript(transcript_path, full_payloads=False)
        self.nodes: dict[str, Node] = {}
        self.pns: dict[str, ProcessingNode] = {}
        self.transports: dict[str, TcpNode] = {}

        roles = spec.roles()
        for node_id in roles:
            self.transports[node_id] = TcpNode(node_id, listen_host=host,
                                               transcript=self.transcript)
        endpoints = {nid: (t.listen_host, t.listen_port)
                     for nid, t in self.transports.items()}
        for node_id, role in roles.items():
            transport = self.transports[node_id]
            transport.peers = dict(endpoints)
            config = spec.node_config(role, node_id, self.data_dir)
            node = _NODE_CLASSES[role](config, transport)
            self.nodes[node_id] = node
            if role == ROLE_PROCESSING:
                self.pns[config.identity_name] = node
            transport.start(node.handle)

    def pn(self, identity_name: str) -> ProcessingNode:
        return self.pns[identity_name]

    def run(self, handles: OpHandle | list[OpHandle], timeout_s: float = 60.0) -> list:
        if isinstance(handles, OpHandle):
            handles = [handles]
        for h in handles:
            if h.wait(timeout_s) is None:
                raise PdsError(f"operation {h.op} did not resolve in {timeout_s}s")
        return [h.result for h in handles]

    def dumps(self) -> dict[str, dict]:
        return {
            node_id: {"role": node.role, "records": node.store.dump()}
            for node_id, node in sorted(self.nodes.items())
        }

    def close(self) -> None:
        for transport in self.transports.values():
            transport.stop()
        for node in self.nodes.values():
            node.close()
        self.transcript.close()
