import itertools
from dataclasses import replace

import numpy as np
import pytest

from iotembed.domain import ServiceRequest, generate_request, generate_topology
from iotembed.heuristic import (
    HeuristicConfig,
    HeuristicError,
    LoadState,
    NoRouteError,
    PlacementError,
    embed_greedy,
    local_search,
    route_paths,
)
from iotembed.milp import InfeasibleError, check_solution, compile_instance, solve_exact
from iotembed.schemes import CANONICAL_SCHEMES
from iotembed.solution import route_from_nodes

from _oracles import shortest_by_scan, simple_paths, tiny_scenario
from conftest import chain_request, make_net


def adjacency(net):
    adj = {n: set() for n in net.node_ids}
    for a, b in net.directed_links():
        adj[a].add(b)
    return adj


def random_costs(net, seed):
    rng = np.random.default_rng(seed)
    return {e: float(rng.uniform(1.0, 10.0)) for e in net.directed_links()}


def best_disjoint_pair(adj, s, t, cost):
    paths = simple_paths(adj, s, t)
    best = np.inf
    for p, q in itertools.product(paths, repeat=2):
        if set(route_from_nodes(p)) & set(route_from_nodes(q)):
            continue
        best = min(best, sum(cost(*e) for e in route_from_nodes(p)) + sum(cost(*e) for e in route_from_nodes(q)))
    return best


class TestConfig:
    def test_invariants(self):
        with pytest.raises(ValueError):
            HeuristicConfig(k_candidate_paths=0)
        with pytest.raises(ValueError):
            HeuristicConfig(local_search_budget=-1)

    def test_dual_needs_two_candidates(self, triangle, weights, table):
        with pytest.raises(ValueError):
            embed_greedy(triangle, chain_request(), CANONICAL_SCHEMES["RPTR"], weights, table, HeuristicConfig(1))


class TestRoutePaths:
    def test_triangle_dual_equal_costs(self, triangle):
        p1, p2 = route_paths(triangle, 0, 1, 5.0, "dual", edge_cost=lambda u, v: 1.0)
        assert p1 == [0, 1]
        assert p2 == [0, 2, 1]

    def test_line_has_no_disjoint_pair(self, line3):
        assert route_paths(line3, 0, 2, 5.0, "single")[0] == [0, 1, 2]
        with pytest.raises(NoRouteError):
            route_paths(line3, 0, 2, 5.0, "dual")

    def test_preconditions(self, triangle):
        with pytest.raises(ValueError):
            route_paths(triangle, 0, 0, 5.0)
        with pytest.raises(ValueError):
            route_paths(triangle, 0, 1, 5.0, "triple")
        apart = make_net([(0.0, 0.0), (90.0, 90.0)], maxdist=10.0)
        with pytest.raises(NoRouteError):
            route_paths(apart, 0, 1, 5.0)

    @pytest.mark.parametrize("seed", range(6))
    def test_single_is_shortest_by_scan(self, seed):
        net = generate_topology(seed, n_nodes=8, area=(200.0, 200.0), max_link_distance=110.0)
        cost = random_costs(net, seed)
        fn = lambda u, v: cost[(u, v)]  # noqa: E731
        p, _ = route_paths(net, 0, 7, 1.0, edge_cost=fn)
        ref, _ = shortest_by_scan(adjacency(net), 0, 7, fn)
        assert sum(fn(*e) for e in route_from_nodes(p)) == pytest.approx(ref, rel=1e-12)

    @pytest.mark.parametrize("seed", range(6))
    def test_dual_pair_is_cheapest(self, seed):
        net = generate_topology(seed, n_nodes=8, area=(200.0, 200.0), max_link_distance=110.0)
        cost = random_costs(net, seed + 100)
        fn = lambda u, v: cost[(u, v)]  # noqa: E731
        ref = best_disjoint_pair(adjacency(net), 0, 7, fn)
        if not np.isfinite(ref):
            with pytest.raises(NoRouteError):
                route_paths(net, 0, 7, 1.0, "dual", edge_cost=fn)
            return
        p1, p2 = route_paths(net, 0, 7, 1.0, "dual", edge_cost=fn)
        assert not set(route_from_nodes(p1)) & set(route_from_nodes(p2))
        assert len(set(p1)) == len(p1) and len(set(p2)) == len(p2)
        got = sum(fn(*e) for e in route_from_nodes(p1)) + sum(fn(*e) for e in route_from_nodes(p2))
        assert got == pytest.approx(ref, abs=1e-4)

    def test_node_disjoint_option(self):
        net = generate_topology(2, n_nodes=10, area=(200.0, 200.0), max_link_distance=120.0)
        p1, p2 = route_paths(net, 0, 9, 4.0, "dual", node_disjoint=True)
        assert not set(p1[1:-1]) & set(p2[1:-1])

    def test_load_aware_cost_avoids_full_node(self, triangle, weights, table):
        state = LoadState(triangle, weights, table)
        state.add([2, 1], 240.0)  # node 1 nearly saturated
        with pytest.raises(NoRouteError):
            route_paths(triangle, 0, 1, 10.0, state=state)


class TestEmbedGreedy:
    def test_empty_request(self, triangle, weights, table):
        sol = embed_greedy(triangle, ServiceRequest(), CANONICAL_SCHEMES["RPTR"], weights, table)
        assert sol.objective == 0.0

    def test_placement_failure(self, triangle, weights, table):
        req = chain_request()
        bp = req.bps[0]
        bad = ServiceRequest((replace(bp, vnodes=(replace(bp.vnodes[0], required_function="fly"),) + bp.vnodes[1:]),))
        with pytest.raises(PlacementError):
            embed_greedy(triangle, bad, CANONICAL_SCHEMES["CCNR"], weights, table)

    def test_tree_has_no_dual_embedding(self, line3, weights, table):
        with pytest.raises(HeuristicError):
            embed_greedy(line3, chain_request(), CANONICAL_SCHEMES["RPTR"], weights, table)

    @pytest.mark.parametrize("name", list(CANONICAL_SCHEMES))
    def test_feasible_and_not_better_than_exact(self, name, weights, table):
        scheme = CANONICAL_SCHEMES[name]
        for seed in range(6):
            net, req = tiny_scenario(seed)
            try:
                exact = solve_exact(compile_instance(net, req, scheme, weights, table), diagnose=False)
            except InfeasibleError:
                exact = None
            try:
                sol = embed_greedy(net, req, scheme, weights, table)
            except HeuristicError:
                continue
            assert exact is not None, "heuristic found an embedding the exact model calls infeasible"
            rep = check_solution(net, req, scheme, sol, weights, table)
            assert rep.all_pass, rep.summary()
            assert sol.objective >= exact.objective - 1e-6

    def test_thirty_node_outputs_check(self, weights, table):
        net = generate_topology(1)
        req = generate_request(1001, net)
        for name in ("CCNR", "FRNR", "STR"):
            scheme = CANONICAL_SCHEMES[name]
            sol = embed_greedy(net, req, scheme, weights, table, HeuristicConfig(local_search_budget=10))
            assert check_solution(net, req, scheme, sol, weights, table).all_pass

    def test_deterministic(self, weights, table):
        net = generate_topology(3)
        req = generate_request(1003, net)
        cfg = HeuristicConfig(local_search_budget=15, seed=4)
        a = embed_greedy(net, req, CANONICAL_SCHEMES["RDTR"], weights, table, cfg)
        b = embed_greedy(net, req, CANONICAL_SCHEMES["RDTR"], weights, table, cfg)
        assert a.canonical_key() == b.canonical_key() and a.objective == b.objective


class TestLocalSearch:
    def setup(self, weights, table, budget=0):
        net = generate_topology(3)
        req = generate_request(1003, net)
        scheme = CANONICAL_SCHEMES["STR"]
        start = embed_greedy(net, req, scheme, weights, table, HeuristicConfig(local_search_budget=budget))
        return net, req, scheme, start

    def test_budget_zero_is_identity(self, weights, table):
        net, req, scheme, start = self.setup(weights, table)
        assert local_search(start, 0, weights, network=net, request=req, latency_table=table) is start

    def test_monotone_and_feasible(self, weights, table):
        net, req, scheme, start = self.setup(weights, table)
        out = local_search(start, 25, weights, network=net, request=req, latency_table=table)
        assert out.objective <= start.objective
        hist = out.stats["objective_history"]
        assert hist[0] == start.objective
        assert all(b < a for a, b in zip(hist, hist[1:]))
        assert out.stats["local_search_evals"] <= 25
        assert check_solution(net, req, scheme, out, weights, table).all_pass

    def test_negative_budget(self, weights, table):
        net, req, scheme, start = self.setup(weights, table)
        with pytest.raises(ValueError):
            local_search(start, -1, weights, network=net, request=req)
