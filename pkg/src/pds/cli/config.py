"""Node configuration files.

JSON, one file per node:

    {
      "role": "processing",
      "node_id": "pn-1",
      "listen": "127.0.0.1:7201",
      "data_dir": "./data/pn-1",
      "identity": "alice",
      "peers": {
        "audit":      {"id": "an-1", "addr": "127.0.0.1:7001"},
        "index":      {"id": "in-1", "addr": "127.0.0.1:7002"},
        "storage":    [{"id": "sn-1", "addr": "127.0.0.1:7101"}, ...],
        "processing": [{"id": "pn-2", "addr": "127.0.0.1:7202"}, ...]
      },
      "timeout_ms": 30000,
      "default_chunks": 3,
      "seed": null
    }

Addresses inside the protocol are the logical node ids; the ``addr``
endpoints only tell the TCP layer where to dial.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from ..errors import ParameterError
from ..nodes.base import NodeConfig
from ..protocol import ROLES


@dataclass
class LoadedConfig:
    node: NodeConfig
    listen_host: str
    listen_port: int
    endpoints: dict[str, tuple[str, int]]


def _split_addr(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise ParameterError(f"address {addr!r} is not host:port")
    return host, int(port)


def load_config(path: str | Path) -> LoadedConfig:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)

    role = doc.get("role")
    if role not in ROLES:
        raise ParameterError(f"unknown role {role!r} (one of {', '.join(ROLES)})")
    node_id = doc.get("node_id")
    if not node_id:
        raise ParameterError("config needs a node_id")
    listen = doc.get("listen", "127.0.0.1:0")
    listen_host, listen_port = _split_addr(listen)

    peers = doc.get("peers", {})
    endpoints: dict[str, tuple[str, int]] = {}
    audit_addr = index_addr = None
    storage_addrs: list[str] = []
    if "audit" in peers:
        audit_addr = peers["audit"]["id"]
        endpoints[audit_addr] = _split_addr(peers["audit"]["addr"])
    if "index" in peers:
        index_addr = peers["index"]["id"]
        endpoints[index_addr] = _split_addr(peers["index"]["addr"])
    for entry in peers.get("storage", []):
        storage_addrs.append(entry["id"])
        endpoints[entry["id"]] = _split_addr(entry["addr"])
    for entry in peers.get("processing", []):
        endpoints[entry["id"]] = _split_addr(entry["addr"])

    node = NodeConfig(
        role=role,
        node_id=node_id,
        data_dir=Path(doc.get("data_dir", f"./data/{node_id}")),
        audit_addr=audit_addr,
        index_addr=index_addr,
        storage_addrs=tuple(storage_addrs),
        identity_name=doc.get("identity"),
        timeout_ms=int(doc.get("timeout_ms", 30_000)),
        default_chunks=int(doc.get("default_chunks", 3)),
        seed=doc.get("seed"),
    )
    return LoadedConfig(node=node, listen_host=listen_host, listen_port=listen_port,
                        endpoints=endpoints)
