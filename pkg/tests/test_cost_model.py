import math

import numpy as np
import pytest

from iotembed.cost_model import (
    CapacityExceededError,
    LatencyTable,
    ObjectiveWeights,
    build_latency_table,
    link_power_per_kbps,
    mm1_sojourn_ms,
    network_power,
    node_latency,
    processing_power,
    total_objective,
)
from iotembed.domain import IoTLink, VirtualNode

from conftest import make_net

F1 = dict(mcu_capacity=8.0, idle_cpu_power=1.0, max_cpu_power=8.0)


def f1_node():
    # node 0 of a generated network carries the first profile
    return make_net([(0.0, 0.0), (50.0, 0.0)]).node(0)


def vn(mcu, vid="a"):
    return VirtualNode("b", vid, "process", None, mcu, 0.1)


def scan_latency(table, rate):
    if rate <= 0:
        return 0.0
    for lam, w in table.levels:
        if lam >= rate - 1e-9:
            return w
    raise CapacityExceededError


class TestLatencyTable:
    def test_mm1_values(self):
        mu = 250 / 1.024
        assert mu == pytest.approx(244.140625)
        assert mm1_sojourn_ms(125.0, 250.0, 128.0) == pytest.approx(1000 / (mu - 125 / 1.024))
        assert mm1_sojourn_ms(125.0, 250.0, 128.0) == pytest.approx(8.192, abs=1e-3)
        assert mm1_sojourn_ms(0.0, 250.0, 128.0) == pytest.approx(4.096)

    def test_levels(self, table):
        assert table.rates[0] == 5.0 and table.max_rate == 245.0
        assert len(table.levels) == 49
        ws = [w for _, w in table.levels]
        assert all(b > a for a, b in zip(ws, ws[1:]))
        assert dict(table.levels)[125.0] == pytest.approx(8.192, abs=1e-3)

    def test_bad_step(self):
        with pytest.raises(ValueError):
            build_latency_table(step=250.0)
        with pytest.raises(ValueError):
            build_latency_table(step=0.0)

    def test_invalid_tables_rejected(self):
        with pytest.raises(ValueError):
            LatencyTable(((10.0, 2.0), (5.0, 3.0)))
        with pytest.raises(ValueError):
            LatencyTable(((5.0, 3.0), (10.0, 2.0)))
        with pytest.raises(ValueError):
            LatencyTable(((5.0, 3.0),), capacity=5.0)

    def test_lookup_cases(self, table):
        assert node_latency(table, 0.0) == 0.0
        assert node_latency(table, 125.0) == dict(table.levels)[125.0]
        assert node_latency(table, 121.0) == dict(table.levels)[125.0]
        with pytest.raises(CapacityExceededError):
            node_latency(table, 245.5)

    def test_lookup_matches_linear_scan(self, table):
        rng = np.random.default_rng(2024)
        rates = rng.uniform(0.0, table.max_rate, 1000)
        rates[:20] = np.array(table.rates[:20])  # exact levels too
        for r in rates:
            assert node_latency(table, float(r)) == scan_latency(table, float(r))


class TestProcessingPower:
    def test_half_load(self):
        assert processing_power(f1_node(), [vn(4.0)]) == pytest.approx(5.0, abs=1e-9)

    def test_empty_and_full(self):
        assert processing_power(f1_node(), []) == 0.0
        assert processing_power(f1_node(), [vn(8.0)]) == pytest.approx(9.0, abs=1e-9)

    def test_over_capacity(self):
        with pytest.raises(CapacityExceededError):
            processing_power(f1_node(), [vn(5.0, "a"), vn(4.0, "b")])

    def test_linearity(self):
        node = f1_node()
        a, b = [vn(1.5, "a")], [vn(2.5, "b")]
        joint = processing_power(node, a + b)
        assert joint == pytest.approx(processing_power(node, a) + processing_power(node, b) - node.idle_cpu_power)


class TestNetworkPower:
    def link(self, d):
        return IoTLink((0, 1), d, 0.05, 2.55e-4)

    def test_coefficients(self):
        assert link_power_per_kbps(self.link(50.0)) == pytest.approx(0.7375, abs=1e-9)
        assert link_power_per_kbps(self.link(100.0)) == pytest.approx(2.65, abs=1e-9)

    def test_single_link(self):
        net = make_net([(0.0, 0.0), (50.0, 0.0)])
        assert network_power(net, {(0, 1): 10.0}) == pytest.approx(9.375, abs=1e-9)
        assert network_power(net, {}) == 0.0
        assert network_power(net, {(0, 1): 0.0}) == 0.0

    def test_unknown_link(self):
        net = make_net([(0.0, 0.0), (50.0, 0.0)])
        with pytest.raises(KeyError):
            network_power(net, {(0, 7): 1.0})

    def test_split_over_disjoint_links(self):
        # 0-1 and 2-3 are 50 m apart pairwise, far from each other
        net = make_net([(0.0, 0.0), (50.0, 0.0), (0.0, 90.0), (50.0, 90.0)], maxdist=55.0)
        whole = network_power(net, {(0, 1): 10.0})
        split = network_power(net, {(0, 1): 5.0, (2, 3): 5.0})
        assert split - whole == pytest.approx(2.0)  # two more idle modules, same traffic term

    def test_additivity_by_resummation(self):
        net = make_net([(0.0, 0.0), (50.0, 0.0), (50.0, 40.0)])
        t1 = {(0, 1): 3.0, (1, 2): 4.0}
        t2 = {(2, 0): 6.0}
        idle = sum(net.node(n).idle_net_power for n in {0, 1, 2})
        moving = sum(x * link_power_per_kbps(net.link(*e)) for e, x in {**t1, **t2}.items())
        assert network_power(net, t1, t2) == pytest.approx(idle + moving)
        assert network_power(net, t1) + network_power(net, {}, t2) - 2.0 == pytest.approx(idle + moving)

    def test_active_override(self):
        net = make_net([(0.0, 0.0), (50.0, 0.0), (50.0, 40.0)])
        assert network_power(net, {}, active=[0, 2]) == 2.0


class TestObjective:
    def test_examples(self):
        w = ObjectiveWeights()
        assert total_objective(w, 0, 0, 0).objective == 0
        assert total_objective(w, 2.0, 5.0, 9.375).objective == pytest.approx(74.375)
        assert total_objective(w, 4.0, 10.0, 18.75).objective == pytest.approx(2 * 74.375)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            total_objective(ObjectiveWeights(), -1.0, 0, 0)
        with pytest.raises(ValueError):
            ObjectiveWeights(alpha=-1.0)
        with pytest.raises(ValueError):
            total_objective(ObjectiveWeights(), math.nan, 0, 0)
