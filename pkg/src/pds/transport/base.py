"""Shared transport pieces: the node-facing port interface and the traffic
transcript.

The transcript is the ground truth of everything that crossed the wire; it
feeds the leak auditor. In simulation it records full payloads, in TCP
mode digests only.
"""

from __future__ import annotations

import hashlib
import json
import threading
from pathlib import Path
from typing import Callable, Protocol

from ..protocol import Envelope

KIND_SEND = "send"
KIND_DELIVER = "deliver"
KIND_DROP = "drop"


def payload_digest(payload: dict) -> str:
    body = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(body).hexdigest()


class NodePort(Protocol):
    """What a node needs from its transport.

    ``call_later`` callbacks run serialized with the node's message
    handlers, so handlers and timers never race on node state.
    """

    address: str

    def send(self, env: Envelope) -> None: ...

    def call_later(self, delay_ms: int, fn: Callable[[], None]) -> None: ...

    def now_ms(self) -> int: ...


class Transcript:
    """Append-only record of every send, delivery, and drop.

    One JSON object per event: {t, kind, from, to, op, step,
    choreography_id, payload_digest, payload?}. ``payload`` is present
    only in full mode.
    """

    def __init__(self, path: str | Path | None = None, *, full_payloads: bool = True):
        self.path = Path(path) if path else None
        self.full_payloads = full_payloads
        self.entries: list[dict] = []
        self._fh = None
        self._lock = threading.Lock()
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "w", encoding="utf-8")

    def record(self, t: int, kind: str, env: Envelope) -> None:
        entry = {
            "t": t,
            "kind": kind,
            "from": env.sender,
            "to": env.receiver,
            "op": env.op,
            "step": env.step,
            "choreography_id": env.choreography_id,
            "payload_digest": payload_digest(env.payload),
        }
        if self.full_payloads:
            entry["payload"] = env.payload
        with self._lock:
            self.entries.append(entry)
            if self._fh:
                self._fh.write(json.dumps(entry, sort_keys=True) + "\n")
                self._fh.flush()

    def counts(self) -> dict[str, int]:
        out = {KIND_SEND: 0, KIND_DELIVER: 0, KIND_DROP: 0}
        for e in self.entries:
            out[e["kind"]] = out.get(e["kind"], 0) + 1
        return out

    def as_bytes(self) -> bytes:
        return b"".join(
            json.dumps(e, sort_keys=True).encode("utf-8") + b"\n" for e in self.entries
        )

    def close(self) -> None:
        if self._fh:
            self._fh.close()
            self._fh = None


def load_transcript(path: str | Path) -> list[dict]:
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                entries.append(json.loads(line))
    return entries
