import json
import random

import pytest

from pds.kvstore import KvStore, RecordStatus


@pytest.fixture
def store(tmp_path):
    s = KvStore(tmp_path / "storage-sn-1.log")
    yield s
    s.close()


class TestBasics:
    def test_read_your_write(self, store):
        store.put("aa" * 16, b"value-1")
        assert store.get("aa" * 16).value == b"value-1"
        assert store.get("aa" * 16).status is RecordStatus.ACTIVE

    def test_last_write_wins_and_versions(self, store):
        k = "bb" * 16
        assert store.put(k, b"v1") == 1
        assert store.put(k, b"v2") == 2
        rec = store.get(k)
        assert rec.value == b"v2"
        assert rec.version == 2

    def test_get_absent(self, store):
        assert store.get("00" * 16) is None

    def test_invalidate(self, store):
        k = "cc" * 16
        store.put(k, b"v")
        store.invalidate(k)
        rec = store.get(k)
        assert rec.status is RecordStatus.INVALIDATED
        assert rec.value == b"v"  # retained for audit

    def test_invalidate_idempotent(self, store):
        k = "dd" * 16
        store.put(k, b"v")
        store.invalidate(k)
        store.invalidate(k)
        assert store.get(k).status is RecordStatus.INVALIDATED

    def test_invalidate_absent(self, store):
        with pytest.raises(KeyError):
            store.invalidate("ee" * 16)


class TestDurability:
    def test_reopen_recovers(self, tmp_path):
        path = tmp_path / "audit-an-1.log"
        s = KvStore(path)
        s.put("aa" * 16, b"persisted")
        s.put("bb" * 16, b"other")
        s.invalidate("bb" * 16)
        # no close: simulates a crash after the appends were flushed
        s2 = KvStore(path)
        assert s2.get("aa" * 16).value == b"persisted"
        assert s2.get("bb" * 16).status is RecordStatus.INVALIDATED
        s.close()
        s2.close()

    def test_truncation_yields_consistent_prefix(self, tmp_path):
        path = tmp_path / "index-in-1.log"
        s = KvStore(path)
        rng = random.Random(17)
        keys = [rng.randbytes(16).hex() for _ in range(20)]
        for i, k in enumerate(keys):
            s.put(k, f"value-{i}".encode())
            if i % 3 == 0:
                s.invalidate(k)
        s.close()
        raw = path.read_bytes()
        lines = raw.splitlines(keepends=True)
        for _ in range(30):
            cut_line = rng.randrange(len(lines) + 1)
            prefix = b"".join(lines[:cut_line])
            # also cut mid-line to model a torn final write
            if cut_line < len(lines) and rng.random() < 0.5:
                prefix += lines[cut_line][: rng.randrange(1, len(lines[cut_line]))]
            trunc = path.parent / "trunc.log"
            trunc.write_bytes(prefix)
            replayed = KvStore(trunc)
            expected = KvStore(path.parent / "expected.log")
            for line in b"".join(lines[:cut_line]).splitlines():
                entry = json.loads(line)
                if entry["op"] == "put":
                    import base64

                    expected.put(entry["key"], base64.b64decode(entry["value"]))
                else:
                    expected.invalidate(entry["key"])
            assert replayed.dump() == expected.dump()
            replayed.close()
            expected.close()
            trunc.unlink()
            (path.parent / "expected.log").unlink()


class TestScan:
    def test_empty(self, store):
        assert store.scan(lambda v: True) == []

    def test_matches_one(self, store):
        store.put("aa" * 16, b"red")
        store.put("bb" * 16, b"blue")
        store.put("cc" * 16, b"red")
        store.invalidate("cc" * 16)
        assert store.scan(lambda v: v == b"red") == [("aa" * 16, b"red")]

    def test_equals_brute_force_filter(self, store):
        rng = random.Random(23)
        live = {}
        for _ in range(200):
            k = rng.randbytes(16).hex()
            v = rng.randbytes(8)
            store.put(k, v)
            live[k] = v
            if rng.random() < 0.25:
                store.invalidate(k)
                del live[k]
        predicate = lambda v: v[0] % 2 == 0
        expected = sorted((k, v) for k, v in live.items() if predicate(v))
        assert store.scan(predicate) == expected

    def test_ascending_key_order(self, store):
        for k in ["ff" * 16, "11" * 16, "aa" * 16]:
            store.put(k, b"x")
        assert [k for k, _ in store.scan(lambda v: True)] == sorted(["ff" * 16, "11" * 16, "aa" * 16])


class TestNothingIsDeleted:
    def test_entry_count_never_decreases(self, store):
        counts = [store.entry_count]
        store.put("aa" * 16, b"v")
        counts.append(store.entry_count)
        store.invalidate("aa" * 16)
        counts.append(store.entry_count)
        store.put("bb" * 16, b"w")
        counts.append(store.entry_count)
        assert counts == sorted(counts)
        assert counts[-1] == 3

    def test_log_line_format(self, store, tmp_path):
        store.put("ab" * 16, b"\x01\x02")
        store.invalidate("ab" * 16)
        lines = [json.loads(l) for l in store.path.read_text().splitlines()]
        assert set(lines[0]) == {"seq", "op", "key", "value", "ts"}
        assert lines[0]["op"] == "put"
        assert lines[0]["seq"] == 1
        assert lines[1]["op"] == "invalidate"
        assert lines[1]["value"] is None
        import base64

        assert base64.b64decode(lines[0]["value"]) == b"\x01\x02"
        # RFC3339 timestamp parses
        from datetime import datetime

        datetime.fromisoformat(lines[0]["ts"])
