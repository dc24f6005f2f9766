import random

import pytest
from hypothesis import given, settings, strategies as st

from pds.errors import ChunkCorruptionError, IncompleteChunkSetError, ParameterError
from pds.secret_split import Chunk, recombine, split


class FixedRng:
    """Emits a scripted byte sequence."""

    def __init__(self, script: bytes):
        self.script = script
        self.pos = 0

    def randbytes(self, n):
        out = self.script[self.pos:self.pos + n]
        assert len(out) == n, "script exhausted"
        self.pos += n
        return out


class TestSplit:
    def test_single_byte_xor_oracle(self):
        # 0x26 ^ 0x12 = 0x34, computed by hand before the implementation
        chunks = split(b"\x26", 2, FixedRng(b"\x12"))
        assert [c.data for c in chunks] == [b"\x12", b"\x34"]

    def test_zero_randomness_degenerate(self):
        pd = b"anything at all"
        chunks = split(pd, 3, FixedRng(bytes(2 * len(pd))))
        assert chunks[0].data == bytes(len(pd))
        assert chunks[1].data == bytes(len(pd))
        assert chunks[2].data == pd

    def test_round_trip_1kib(self):
        pd = random.Random(5).randbytes(1024)
        assert recombine(split(pd, 5, random.Random(6))) == pd

    def test_indices_and_totals(self):
        chunks = split(b"abc", 4, random.Random(0))
        assert [c.index for c in chunks] == [1, 2, 3, 4]
        assert all(c.total == 4 for c in chunks)
        assert all(len(c.data) == 3 for c in chunks)

    @pytest.mark.parametrize("n", [0, 1, 17])
    def test_chunk_count_bounds(self, n):
        with pytest.raises(ParameterError):
            split(b"x", n, random.Random(0))

    def test_empty_data_rejected(self):
        with pytest.raises(ParameterError):
            split(b"", 2, random.Random(0))

    def test_oversize_rejected(self):
        with pytest.raises(ParameterError):
            split(b"\x00" * ((1 << 20) + 1), 2, random.Random(0))

    def test_different_seeds_different_chunks(self):
        pd = b"some fixed private data payload!"
        a = split(pd, 3, random.Random(1))
        b = split(pd, 3, random.Random(2))
        assert all(x.data != y.data for x, y in zip(a, b))


class TestRecombine:
    def test_xor_oracle_pair(self):
        chunks = [Chunk(b"\x12", 1, 2), Chunk(b"\x34", 2, 2)]
        assert recombine(chunks) == b"\x26"

    def test_order_independent(self):
        pd = b"order should never matter here"
        chunks = split(pd, 4, random.Random(3))
        assert recombine(list(reversed(chunks))) == pd

    def test_missing_index(self):
        chunks = split(b"xyz", 3, random.Random(0))
        with pytest.raises(IncompleteChunkSetError):
            recombine([chunks[0], chunks[2]])

    def test_duplicate_index(self):
        chunks = split(b"xyz", 3, random.Random(0))
        with pytest.raises(IncompleteChunkSetError):
            recombine([chunks[0], chunks[0], chunks[2]])

    def test_length_mismatch(self):
        with pytest.raises(ChunkCorruptionError):
            recombine([Chunk(b"ab", 1, 2), Chunk(b"a", 2, 2)])

    def test_total_mismatch(self):
        with pytest.raises(ChunkCorruptionError):
            recombine([Chunk(b"a", 1, 2), Chunk(b"a", 2, 3)])

    def test_empty_set(self):
        with pytest.raises(IncompleteChunkSetError):
            recombine([])


@settings(max_examples=150, deadline=None)
@given(
    pd=st.binary(min_size=1, max_size=2048),
    n=st.integers(min_value=2, max_value=16),
    seed=st.integers(min_value=0, max_value=2**32),
)
def test_round_trip_property(pd, n, seed):
    assert recombine(split(pd, n, random.Random(seed))) == pd


@settings(max_examples=60, deadline=None)
@given(
    pd=st.binary(min_size=1, max_size=256),
    n=st.integers(min_value=2, max_value=8),
    seed=st.integers(min_value=0, max_value=2**32),
    order_seed=st.integers(min_value=0, max_value=2**32),
)
def test_permutation_property(pd, n, seed, order_seed):
    chunks = split(pd, n, random.Random(seed))
    random.Random(order_seed).shuffle(chunks)
    assert recombine(chunks) == pd


def test_proper_subset_never_reveals_data():
    # strict-subset XOR equals the data only with vanishing probability
    rng = random.Random(99)
    for _ in range(200):
        pd = rng.randbytes(32)
        chunks = split(pd, 4, rng)
        for drop in range(4):
            subset = [c for c in chunks if c.index != drop + 1]
            acc = bytes(32)
            for c in subset:
                acc = bytes(x ^ y for x, y in zip(acc, c.data))
            assert acc != pd
