"""Real TCP backend.

Addresses stay logical (node ids) so that store contents are comparable
with simulation runs; each node resolves peers through a directory of
host:port endpoints. Frames are the protocol module's length-prefixed
JSON. One reader thread per inbound connection feeds the node's serial
loop; timer callbacks are funneled through the same loop, so node state
is only ever touched from one thread.
"""

from __future__ import annotations

import logging
import queue
import select
import socket
import struct
import threading
import time
from typing import Callable

from ..errors import TransportError
from ..protocol import MAX_FRAME_BYTES, Envelope, decode_frame, encode_frame
from .base import KIND_DELIVER, KIND_SEND, Transcript

logger = logging.getLogger(__name__)

_CONNECT_TIMEOUT_S = 3.0


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    buf = b""
    while len(buf) < n:
        try:
            part = sock.recv(n - len(buf))
        except OSError:
            return None
        if not part:
            return None
        buf += part
    return buf


class TcpNode:
    """TCP transport bound to one node.

    ``peers`` maps logical node ids to (host, port). The node's own
    listen port may be 0; the bound port is available as ``listen_port``
    after construction.
    """

    def __init__(
        self,
        address: str,
        listen_host: str = "127.0.0.1",
        listen_port: int = 0,
        peers: dict[str, tuple[str, int]] | None = None,
        transcript: Transcript | None = None,
    ):
        self.address = address
        self.peers = dict(peers or {})
        self.transcript = transcript or Transcript(full_payloads=False)
        self._handler: Callable[[Envelope], None] | None = None
        self._inbox: queue.Queue = queue.Queue()
        self._conns: dict[str, socket.socket] = {}
        self._conn_locks: dict[str, threading.Lock] = {}
        self._conns_guard = threading.Lock()
        self._stopping = threading.Event()
        self._threads: list[threading.Thread] = []

        self._server = socket.create_server((listen_host, listen_port))
        self.listen_host = listen_host
        self.listen_port = self._server.getsockname()[1]

    # -- lifecycle ---------------------------------------------------------

    def start(self, handler: Callable[[Envelope], None]) -> None:
        self._handler = handler
        accept = threading.Thread(target=self._accept_loop, daemon=True,
                                  name=f"{self.address}-accept")
        loop = threading.Thread(target=self._node_loop, daemon=True,
                                name=f"{self.address}-loop")
        self._threads += [accept, loop]
        accept.start()
        loop.start()

    def stop(self) -> None:
        self._stopping.set()
        try:
            self._server.close()
        except OSError:
            pass
        with self._conns_guard:
            for sock in self._conns.values():
                try:
                    sock.close()
                except OSError:
                    pass
            self._conns.clear()
        self._inbox.put(None)

    def add_peer(self, address: str, host: str, port: int) -> None:
        self.peers[address] = (host, port)

    # -- node-facing port --------------------------------------------------

    def now_ms(self) -> int:
        return int(time.monotonic() * 1000)

    def call_later(self, delay_ms: int, fn: Callable[[], None]) -> None:
        timer = threading.Timer(delay_ms / 1000.0, lambda: self._inbox.put(("call", fn)))
        timer.daemon = True
        timer.start()

    def send(self, env: Envelope) -> None:
        frame = encode_frame(env)  # raises on oversize before any I/O
        endpoint = self.peers.get(env.receiver)
        if endpoint is None and ":" in env.receiver:
            # receivers may be literal host:port instead of a known node id
            host, _, port = env.receiver.rpartition(":")
            if port.isdigit():
                endpoint = (host, int(port))
        if endpoint is None:
            raise TransportError(f"no endpoint for {env.receiver!r}")
        self.transcript.record(self.now_ms(), KIND_SEND, env)
        lock = self._lock_for(env.receiver)
        with lock:
            try:
                self._write(env.receiver, endpoint, frame)
            except OSError:
                # one reconnect attempt, then surface as a send error
                self._drop_conn(env.receiver)
                try:
                    self._write(env.receiver, endpoint, frame)
                except OSError as exc:
                    self._drop_conn(env.receiver)
                    raise TransportError(f"send to {env.receiver} failed: {exc}") from exc

    # -- internals ---------------------------------------------------------

    def _lock_for(self, address: str) -> threading.Lock:
        with self._conns_guard:
            return self._conn_locks.setdefault(address, threading.Lock())

    def _drop_conn(self, address: str) -> None:
        with self._conns_guard:
            sock = self._conns.pop(address, None)
        if sock:
            try:
                sock.close()
            except OSError:
                pass

    @staticmethod
    def _alive(sock: socket.socket) -> bool:
        """Outbound connections are send-only: anything readable is either
        an EOF from a gone peer or junk; both mean reconnect."""
        try:
            readable, _, _ = select.select([sock], [], [], 0)
            if readable:
                return bool(sock.recv(4096))
            return True
        except OSError:
            return False

    def _write(self, address: str, endpoint: tuple[str, int], frame: bytes) -> None:
        with self._conns_guard:
            sock = self._conns.get(address)
        if sock is not None and not self._alive(sock):
            self._drop_conn(address)
            sock = None
        if sock is None:
            sock = socket.create_connection(endpoint, timeout=_CONNECT_TIMEOUT_S)
            sock.settimeout(None)
            with self._conns_guard:
                self._conns[address] = sock
        sock.sendall(frame)

    def _accept_loop(self) -> None:
        while not self._stopping.is_set():
            try:
                conn, _ = self._server.accept()
            except OSError:
                return
            reader = threading.Thread(target=self._read_loop, args=(conn,), daemon=True)
            self._threads.append(reader)
            reader.start()

    def _read_loop(self, conn: socket.socket) -> None:
        with conn:
            while not self._stopping.is_set():
                header = _recv_exact(conn, 4)
                if header is None:
                    return
                (length,) = struct.unpack(">I", header)
                if length > MAX_FRAME_BYTES:
                    logger.warning("%s: inbound frame of %d bytes rejected", self.address, length)
                    return
                body = _recv_exact(conn, length)
                if body is None:
                    return
                try:
                    env = decode_frame(header + body)
                except Exception:
                    logger.warning("%s: undecodable frame dropped", self.address)
                    continue
                self._inbox.put(("env", env))

    def _node_loop(self) -> None:
        while True:
            item = self._inbox.get()
            if item is None:
                return
            kind, value = item
            try:
                if kind == "env":
                    self.transcript.record(self.now_ms(), KIND_DELIVER, value)
                    self._handler(value)
                else:
                    value()
            except Exception:
                logger.exception("%s: handler failed", self.address)
