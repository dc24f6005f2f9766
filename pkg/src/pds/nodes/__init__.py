"""The four node roles: audit, index, storage, processing."""

from .base import Node, NodeConfig, OpHandle, OpResult
from .audit import AuditNode
from .index import IndexNode
from .storage import StorageNode
from .processing import ProcessingNode

__all__ = [
    "Node",
    "NodeConfig",
    "OpHandle",
    "OpResult",
    "AuditNode",
    "IndexNode",
    "StorageNode",
    "ProcessingNode",
]
