import pytest

from pds.sim_harness import ClusterSpec, SimCluster
from pds.transport import SimNetConfig


@pytest.fixture
def make_cluster(tmp_path):
    """Factory for simulated clusters; closes them at teardown."""
    created = []

    def factory(spec: ClusterSpec | None = None, net: SimNetConfig | None = None,
                **spec_kwargs) -> SimCluster:
        if spec is None:
            spec = ClusterSpec(**spec_kwargs)
        cluster = SimCluster(spec, tmp_path / f"cluster{len(created)}", net)
        created.append(cluster)
        return cluster

    yield factory
    for cluster in created:
        cluster.close()


@pytest.fixture
def cluster(make_cluster):
    """Default cluster: 1 audit, 1 index, 3 storage, alice + bob."""
    return make_cluster(processing={"pn-1": "alice", "pn-2": "bob"}, seed=1234)
