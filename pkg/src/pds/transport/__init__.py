"""Message delivery backends: deterministic in-process simulation and TCP."""

from .base import NodePort, Transcript, payload_digest
from .sim import SimNet, SimNetConfig
from .tcp import TcpNode

__all__ = [
    "NodePort",
    "Transcript",
    "payload_digest",
    "SimNet",
    "SimNetConfig",
    "TcpNode",
]
