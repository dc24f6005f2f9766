"""Split private data into n undecipherable chunks and recombine them.

The scheme is n-of-n XOR additive secret sharing: chunks 1..n-1 are
uniform random bytes, chunk n is the bytewise XOR of the data with all of
them. Any n-1 chunks are jointly uniform and statistically independent of
the data, so a strict subset of chunks carries no information about it.
All chunks share the source length (length is not hidden).
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Sequence

from .errors import ChunkCorruptionError, IncompleteChunkSetError, ParameterError

MAX_DATA_BYTES = 1 << 20
MIN_CHUNKS = 2
MAX_CHUNKS = 16
DEFAULT_CHUNKS = 3


@dataclass(frozen=True)
class Chunk:
    """One additive share of a piece of private data."""

    data: bytes
    index: int
    total: int

    def __post_init__(self):
        if self.total < MIN_CHUNKS:
            raise ParameterError(f"chunk total must be >= {MIN_CHUNKS}")
        if not 1 <= self.index <= self.total:
            raise ParameterError(f"chunk index {self.index} outside 1..{self.total}")
        if len(self.data) == 0:
            raise ParameterError("chunk data must be non-empty")


def _xor(a: bytes, b: bytes) -> bytes:
    n = len(a)
    return (int.from_bytes(a, "big") ^ int.from_bytes(b, "big")).to_bytes(n, "big")


def split(data: bytes, n: int = DEFAULT_CHUNKS, rng: random.Random | None = None) -> list[Chunk]:
    """Split ``data`` into ``n`` chunks; all ``n`` are needed to recombine.

    ``rng`` feeds the n-1 random shares; pass a seeded generator for
    reproducible simulation runs.
    """
    if not MIN_CHUNKS <= n <= MAX_CHUNKS:
        raise ParameterError(f"chunk count must be in {MIN_CHUNKS}..{MAX_CHUNKS}, got {n}")
    if len(data) == 0:
        raise ParameterError("cannot split empty data")
    if len(data) > MAX_DATA_BYTES:
        raise ParameterError(f"data exceeds {MAX_DATA_BYTES} byte cap")
    rng = rng or random.SystemRandom()

    chunks: list[Chunk] = []
    last = data
    for i in range(1, n):
        share = rng.randbytes(len(data))
        chunks.append(Chunk(data=share, index=i, total=n))
        last = _xor(last, share)
    chunks.append(Chunk(data=last, index=n, total=n))
    return chunks


def recombine(chunks: Sequence[Chunk]) -> bytes:
    """XOR a complete chunk set back into the original data.

    Order-independent. Requires indices to form exactly {1..total} and all
    chunks to agree on length and total.
    """
    if not chunks:
        raise IncompleteChunkSetError("no chunks given")
    total = chunks[0].total
    length = len(chunks[0].data)
    if any(c.total != total for c in chunks):
        raise ChunkCorruptionError("chunks disagree on total")
    if any(len(c.data) != length for c in chunks):
        raise ChunkCorruptionError("chunks disagree on length")
    indices = sorted(c.index for c in chunks)
    if indices != list(range(1, total + 1)):
        raise IncompleteChunkSetError(f"indices {indices} are not exactly 1..{total}")

    out = bytes(length)
    for c in chunks:
        out = _xor(out, c.data)
    return out
