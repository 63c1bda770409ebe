import pytest

from iotembed.cost_model import ObjectiveWeights, build_latency_table
from iotembed.domain import (
    BusinessProcess,
    ServiceRequest,
    TopologyDefaults,
    VirtualLink,
    VirtualNode,
    build_network,
)

ONE_ZONE = TopologyDefaults(zone_grid=(1, 1))


def make_net(positions, maxdist=75.0, area=(100.0, 100.0), functions=None):
    return build_network(positions, area, maxdist, functions, ONE_ZONE)


def chain_request(demands=(10.0,), mcu=(2.0, 3.0), bp="bp0", kinds=None):
    """One BP whose vnodes v0 -> v1 -> ... carry the given demands."""
    n = len(demands) + 1
    mcu = list(mcu) + [1.0] * (n - len(mcu))
    kinds = kinds or (["sensor"] + ["controller"] * (n - 1))
    vnodes = tuple(VirtualNode(bp, f"v{i}", "process", None, mcu[i], 0.25, kinds[i]) for i in range(n))
    vlinks = tuple(VirtualLink(bp, (f"v{i}", f"v{i + 1}"), d) for i, d in enumerate(demands))
    return ServiceRequest((BusinessProcess(bp, vnodes, vlinks),))


@pytest.fixture
def weights():
    return ObjectiveWeights()


@pytest.fixture
def table():
    return build_latency_table()


@pytest.fixture
def triangle():
    return make_net([(10.0, 10.0), (60.0, 10.0), (35.0, 50.0)])


@pytest.fixture
def line3():
    return make_net([(10.0, 10.0), (60.0, 10.0), (110.0, 10.0)], maxdist=60.0, area=(120.0, 20.0))
