"""Honest-but-curious collusion analysis over captured node state.

The adversary holds the full store dumps of some subset of nodes and
plays the strongest passive strategy:

- the data bytes of a target come out iff the view contains the index
  node (which maps the master key to its chunk locations) and every
  storage node holding one of those chunks;
- who owns the data, who it was shared with, and what it means come out
  iff the view contains the audit node.

With all storage nodes but no index node the analyzer refuses: chunk
grouping is unknown, and brute-force grouping over chunk combinations is
outside the model (see the report preamble emitted by the CLI).

Invalidated records count as readable: tombstoned values remain on disk,
so a colluding node can read them.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..nodes.audit import AuditRecord
from ..protocol import ROLE_AUDIT, ROLE_INDEX, ROLE_STORAGE
from ..secret_split import Chunk, recombine

MODEL_NOTE = (
    "Passive adversary over captured node state; brute-force grouping of "
    "chunks without the index node is outside the model."
)


@dataclass
class NodeDump:
    node_id: str
    role: str
    records: dict[str, dict]

    def value_bytes(self, key: str) -> bytes | None:
        rec = self.records.get(key)
        if rec is None:
            return None
        return base64.b64decode(rec["value"])


@dataclass
class AdversaryView:
    """State of the colluding subset: full kvstore dumps per node."""

    nodes: dict[str, NodeDump] = field(default_factory=dict)

    def by_role(self, role: str) -> list[NodeDump]:
        return [d for _, d in sorted(self.nodes.items()) if d.role == role]


@dataclass
class Attribution:
    owner: str
    processors: list[str]
    metadata: dict[str, str]


@dataclass
class ReconstructionResult:
    data: bytes | None
    attribution: Attribution | None

    @property
    def got_bytes(self) -> bool:
        return self.data is not None

    @property
    def got_attribution(self) -> bool:
        return self.attribution is not None


def snapshot_view(cluster, node_ids: list[str]) -> AdversaryView:
    """Capture the chosen nodes' state from a live cluster."""
    dumps = cluster.dumps()
    view = AdversaryView()
    for node_id in node_ids:
        info = dumps[node_id]
        view.nodes[node_id] = NodeDump(node_id=node_id, role=info["role"],
                                       records=info["records"])
    return view


def view_from_dumps(dump_dir: str | Path, node_ids: list[str]) -> AdversaryView:
    """Load a view from a ``pds-sim run --out`` dumps directory."""
    dump_dir = Path(dump_dir)
    view = AdversaryView()
    for node_id in node_ids:
        path = dump_dir / f"{node_id}.json"
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        view.nodes[node_id] = NodeDump(node_id=node_id, role=doc["role"],
                                       records=doc["records"])
    return view


def attempt_reconstruction(view: AdversaryView, target_mk: str) -> ReconstructionResult:
    """What the colluding subset can learn about one stored item.

    Absence of a capability is a result, not an error.
    """
    data = None
    for index_dump in view.by_role(ROLE_INDEX):
        raw = index_dump.value_bytes(target_mk)
        if raw is None:
            continue
        entries = json.loads(raw.decode("utf-8"))["entries"]
        total = len(entries)
        chunks = []
        for i, (sn_addr, pk) in enumerate(entries, start=1):
            sn = view.nodes.get(sn_addr)
            if sn is None or sn.role != ROLE_STORAGE:
                chunks = None
                break
            value = sn.value_bytes(pk)
            if value is None:
                chunks = None
                break
            doc = json.loads(value.decode("utf-8"))
            chunks.append(Chunk(data=base64.b64decode(doc["chunk"]), index=i, total=total))
        if chunks is not None:
            data = recombine(chunks)
            break

    attribution = None
    for audit_dump in view.by_role(ROLE_AUDIT):
        owner = None
        processors = set()
        metadata: dict[str, str] = {}
        for kr, rec in sorted(audit_dump.records.items()):
            audit = AuditRecord.from_value(kr, base64.b64decode(rec["value"]),
                                           rec["status"])
            if audit.mk != target_mk:
                continue
            owner = audit.do.name
            processors.add(audit.dp.name)
            metadata = audit.md
        if owner is not None:
            attribution = Attribution(owner=owner, processors=sorted(processors),
                                      metadata=metadata)
            break

    return ReconstructionResult(data=data, attribution=attribution)
