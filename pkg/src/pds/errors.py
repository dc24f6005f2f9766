"""Exception hierarchy shared across the package."""

from __future__ import annotations


class PdsError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(PdsError, ValueError):
    """A caller-supplied parameter violates an operation's preconditions."""


class EncodingError(PdsError, ValueError):
    """Malformed hex identifier, frame, or wire payload."""


class ProtocolError(PdsError):
    """A message violates the protocol: unknown step, wrong role, bad schema.

    ``reason`` is machine-readable: ``unknown_step``, ``wrong_role`` or
    ``bad_schema``.
    """

    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        self.detail = detail
        super().__init__(f"{reason}: {detail}" if detail else reason)


class IncompleteChunkSetError(PdsError, ValueError):
    """Chunk indices do not form exactly {1..total}."""


class ChunkCorruptionError(PdsError, ValueError):
    """Chunks of one recombination disagree on length or total."""


class StoreError(PdsError):
    """Key-value store I/O failure; aborts the surrounding choreography."""


class KeyCollisionError(PdsError):
    """Fresh-key generation kept colliding with existing keys."""


class TransportError(PdsError):
    """Message could not be handed to the transport (unknown destination,
    closed connection, oversize frame)."""


class ScenarioError(PdsError, ValueError):
    """A scenario file is malformed or references undeclared entities."""


class AuditError(PdsError):
    """The transcript handed to the leak auditor is malformed."""
