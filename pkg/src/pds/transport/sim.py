"""Deterministic in-process network simulation.

A single virtual-time scheduler owns an event heap; everything (latency,
drops, reorder jitter) is drawn from one seeded generator in send order,
so the same seed and send sequence produce an identical delivery schedule
and a byte-identical transcript.
"""

from __future__ import annotations

import heapq
import logging
import random
from dataclasses import dataclass
from typing import Callable

from ..errors import TransportError
from ..protocol import Envelope
from .base import KIND_DELIVER, KIND_DROP, KIND_SEND, Transcript

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimNetConfig:
    seed: int = 0
    latency_min_ms: int = 1
    latency_max_ms: int = 5
    drop_prob: float = 0.0
    reorder_window_ms: int = 0


class SimNet:
    """Virtual-time message scheduler for a whole cluster."""

    def __init__(self, config: SimNetConfig | None = None, transcript: Transcript | None = None):
        self.config = config or SimNetConfig()
        self.transcript = transcript or Transcript()
        self.rng = random.Random(self.config.seed)
        self._now = 0
        self._seq = 0
        self._events: list[tuple[int, int, Callable[[], None]]] = []
        self._handlers: dict[str, Callable[[Envelope], None]] = {}

    # -- registration ------------------------------------------------------

    def register(self, address: str, handler: Callable[[Envelope], None]) -> None:
        self._handlers[address] = handler

    def unregister(self, address: str) -> None:
        self._handlers.pop(address, None)

    def port(self, address: str) -> "SimPort":
        return SimPort(self, address)

    # -- scheduling --------------------------------------------------------

    def now_ms(self) -> int:
        return self._now

    def _push(self, at: int, fn: Callable[[], None]) -> None:
        self._seq += 1
        heapq.heappush(self._events, (at, self._seq, fn))

    def call_later(self, delay_ms: int, fn: Callable[[], None]) -> None:
        self._push(self._now + max(0, int(delay_ms)), fn)

    def send(self, env: Envelope) -> None:
        if env.receiver not in self._handlers:
            raise TransportError(f"unknown destination {env.receiver!r}")
        self.transcript.record(self._now, KIND_SEND, env)
        cfg = self.config
        if cfg.drop_prob > 0 and self.rng.random() < cfg.drop_prob:
            self.transcript.record(self._now, KIND_DROP, env)
            return
        latency = self.rng.randint(cfg.latency_min_ms, cfg.latency_max_ms)
        if cfg.reorder_window_ms > 0:
            latency += self.rng.randint(0, cfg.reorder_window_ms)
        self._push(self._now + latency, lambda: self._deliver(env))

    def _deliver(self, env: Envelope) -> None:
        handler = self._handlers.get(env.receiver)
        if handler is None:
            # receiver was killed after the message left; counts as a drop
            self.transcript.record(self._now, KIND_DROP, env)
            return
        self.transcript.record(self._now, KIND_DELIVER, env)
        handler(env)

    # -- execution ---------------------------------------------------------

    def step(self) -> bool:
        """Run the next event; False when the queue is empty."""
        if not self._events:
            return False
        at, _, fn = heapq.heappop(self._events)
        self._now = max(self._now, at)
        fn()
        return True

    def run_until_idle(self, max_ms: int | None = None) -> None:
        while self._events:
            if max_ms is not None and self._events[0][0] > max_ms:
                break
            self.step()

    def run_until(self, pred: Callable[[], bool], max_ms: int | None = None) -> bool:
        """Run events until ``pred()`` holds; True if it did."""
        while not pred():
            if not self._events:
                return pred()
            if max_ms is not None and self._events[0][0] > max_ms:
                return pred()
            self.step()
        return True

    def settle(self, window_ms: int) -> None:
        """Drain in-flight deliveries: process events as long as the next
        one is within ``window_ms`` of virtual now. Far-future timers stay
        queued."""
        while self._events and self._events[0][0] <= self._now + window_ms:
            self.step()


@dataclass
class SimPort:
    """One node's view of the simulated network."""

    net: SimNet
    address: str

    def send(self, env: Envelope) -> None:
        self.net.send(env)

    def call_later(self, delay_ms: int, fn: Callable[[], None]) -> None:
        self.net.call_later(delay_ms, fn)

    def now_ms(self) -> int:
        return self.net.now_ms()
