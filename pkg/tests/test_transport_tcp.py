import base64
import time

import pytest

from pds.errors import TransportError
from pds.protocol import MAX_FRAME_BYTES, Envelope
from pds.sim_harness import ClusterSpec, SimCluster, TcpCluster
from pds.transport import TcpNode


@pytest.fixture
def tcp_pair():
    a = TcpNode("a")
    b = TcpNode("b")
    a.add_peer("b", b.listen_host, b.listen_port)
    b.add_peer("a", a.listen_host, a.listen_port)
    yield a, b
    a.stop()
    b.stop()


def wait_for(pred, timeout_s=5.0):
    end = time.monotonic() + timeout_s
    while time.monotonic() < end:
        if pred():
            return True
        time.sleep(0.01)
    return pred()


class TestTcpNode:
    def test_frame_preserved(self, tcp_pair):
        a, b = tcp_pair
        got = []
        a.start(lambda e: None)
        b.start(got.append)
        env = Envelope("cd" * 16, "store", "StoreGrant", "a", "b",
                       {"kr": "11" * 16, "mk": "22" * 16})
        a.send(env)
        assert wait_for(lambda: len(got) == 1)
        assert got[0] == env

    def test_oversize_frame_rejected_before_send(self, tcp_pair):
        a, b = tcp_pair
        a.start(lambda e: None)
        b.start(lambda e: None)
        big = base64.b64encode(b"\x00" * (MAX_FRAME_BYTES + 100)).decode()
        env = Envelope("cd" * 16, "store", "ChunkPut", "a", "b",
                       {"chunk": big, "index": 1, "total": 2})
        with pytest.raises(Exception):
            a.send(env)
        time.sleep(0.1)

    def test_killed_peer_is_send_error_not_crash(self, tcp_pair):
        a, b = tcp_pair
        a.start(lambda e: None)
        b.start(lambda e: None)
        env = Envelope("cd" * 16, "store", "StoreGrant", "a", "b",
                       {"kr": "11" * 16, "mk": "22" * 16})
        a.send(env)
        b.stop()
        time.sleep(0.1)
        with pytest.raises(TransportError):
            for _ in range(20):  # until the dead pool connection surfaces
                a.send(env)
                time.sleep(0.02)

    def test_unknown_destination(self, tcp_pair):
        a, _ = tcp_pair
        a.start(lambda e: None)
        env = Envelope("cd" * 16, "store", "StoreGrant", "a", "zz",
                       {"kr": "11" * 16, "mk": "22" * 16})
        with pytest.raises(TransportError):
            a.send(env)

    def test_host_port_receiver_fallback(self):
        a = TcpNode("a")
        b = TcpNode("b")
        got = []
        a.start(lambda e: None)
        b.start(got.append)
        env = Envelope("cd" * 16, "store", "StoreGrant", "a",
                       f"{b.listen_host}:{b.listen_port}",
                       {"kr": "11" * 16, "mk": "22" * 16})
        a.send(env)
        assert wait_for(lambda: len(got) == 1)
        a.stop()
        b.stop()


class TestBackendEquivalence:
    def test_store_retrieve_round_trip_matches_sim(self, tmp_path):
        pd = b"equivalence payload: 0123456789abcdef0123456789"
        spec = ClusterSpec(processing={"pn-1": "alice"}, seed=77)

        sim = SimCluster(spec, tmp_path / "sim")
        sim_store = sim.run(sim.pn("alice").begin_store("x", pd, {"k": "v"}, 3))[0]
        sim_read = sim.run(sim.pn("alice").begin_retrieve("x"))[0]
        sim_dumps = sim.dumps()
        sim.close()

        spec2 = ClusterSpec(processing={"pn-1": "alice"}, seed=77)
        tcp = TcpCluster(spec2, tmp_path / "tcp")
        tcp_store = tcp.run(tcp.pn("alice").begin_store("x", pd, {"k": "v"}, 3))[0]
        tcp_read = tcp.run(tcp.pn("alice").begin_retrieve("x"))[0]
        tcp_dumps = tcp.dumps()
        tcp.close()

        assert sim_store.brief() == tcp_store.brief()
        assert sim_read.brief() == tcp_read.brief()
        assert sim_read.value == tcp_read.value == pd
        assert sim_dumps == tcp_dumps
