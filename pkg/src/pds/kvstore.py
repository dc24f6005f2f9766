"""Durable key-value store with tombstone invalidation.

One instance per node. Every mutation is appended to a newline-delimited
JSON log before it is acknowledged; replaying the log reproduces the
in-memory map exactly. Invalidation marks a record dead without removing
it: nothing is ever deleted, which keeps the full audit trail on disk.
A truncated trailing line (crash mid-append) is ignored on replay.
"""

from __future__ import annotations

import base64
import json
import logging
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Iterator

from .errors import StoreError

logger = logging.getLogger(__name__)


class RecordStatus(str, Enum):
    ACTIVE = "active"
    INVALIDATED = "invalidated"


@dataclass
class Record:
    key: str
    value: bytes
    status: RecordStatus
    version: int


def _now_rfc3339() -> str:
    return datetime.now(timezone.utc).isoformat()


class KvStore:
    """Append-only-logged map of hex keys to opaque byte values.

    The store object is owned by exactly one node message loop; it is not
    thread-safe and does not need to be.
    """

    def __init__(self, path: str | Path, *, fsync: bool = False):
        self.path = Path(path)
        self._fsync = fsync
        self._records: dict[str, Record] = {}
        self._seq = 0
        self._fh = None
        self._replay()
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "a", encoding="utf-8")
        except OSError as exc:
            raise StoreError(f"cannot open log {self.path}: {exc}") from exc

    # -- log plumbing ------------------------------------------------------

    def _replay(self) -> None:
        if not self.path.exists():
            return
        with open(self.path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    entry = json.loads(line)
                except json.JSONDecodeError:
                    logger.warning("truncated/garbled log entry in %s; stopping replay", self.path)
                    break
                self._apply(entry, replaying=True)

    def _apply(self, entry: dict, *, replaying: bool) -> None:
        op, key = entry["op"], entry["key"]
        self._seq = max(self._seq, entry["seq"])
        prior = self._records.get(key)
        version = (prior.version if prior else 0) + 1
        if op == "put":
            value = base64.b64decode(entry["value"])
            self._records[key] = Record(key, value, RecordStatus.ACTIVE, version)
        elif op == "invalidate":
            if prior is None:
                if replaying:
                    logger.warning("invalidate of unknown key %s in log", key)
                    return
                raise KeyError(key)
            prior.status = RecordStatus.INVALIDATED
            prior.version = version
        else:
            logger.warning("unknown log op %r; skipped", op)

    def _append(self, op: str, key: str, value: bytes | None) -> None:
        entry = {
            "seq": self._seq + 1,
            "op": op,
            "key": key,
            "value": base64.b64encode(value).decode("ascii") if value is not None else None,
            "ts": _now_rfc3339(),
        }
        try:
            self._fh.write(json.dumps(entry, sort_keys=True) + "\n")
            self._fh.flush()
            if self._fsync:
                os.fsync(self._fh.fileno())
        except (OSError, AttributeError) as exc:
            raise StoreError(f"log append failed: {exc}") from exc
        self._apply(entry, replaying=False)

    # -- operations --------------------------------------------------------

    def put(self, key: str, value: bytes) -> int:
        """Store ``value`` under ``key``; returns the key's new version."""
        self._append("put", key, value)
        return self._records[key].version

    def get(self, key: str) -> Record | None:
        """Return the record (active or invalidated) or None if never stored."""
        return self._records.get(key)

    def invalidate(self, key: str) -> int:
        """Tombstone ``key``. Idempotent on already-invalidated records;
        raises KeyError for never-stored keys."""
        rec = self._records.get(key)
        if rec is None:
            raise KeyError(key)
        self._append("invalidate", key, None)
        return rec.version

    def scan(self, predicate: Callable[[bytes], bool]) -> list[tuple[str, bytes]]:
        """All active records whose value matches, in ascending key order."""
        return [
            (k, r.value)
            for k, r in sorted(self._records.items())
            if r.status is RecordStatus.ACTIVE and predicate(r.value)
        ]

    def items(self) -> Iterator[tuple[str, Record]]:
        yield from sorted(self._records.items())

    def dump(self) -> dict[str, dict]:
        """Full contents, invalidated records included, for audits and
        adversary views."""
        return {
            k: {
                "value": base64.b64encode(r.value).decode("ascii"),
                "status": r.status.value,
                "version": r.version,
            }
            for k, r in sorted(self._records.items())
        }

    @property
    def entry_count(self) -> int:
        """Total log entries so far; never decreases."""
        return self._seq

    def __contains__(self, key: str) -> bool:
        return key in self._records

    def __len__(self) -> int:
        return len(self._records)

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None
