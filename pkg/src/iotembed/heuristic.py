"""Greedy embedding with cost-aware (disjoint) routing and local search.

The greedy pass places virtual nodes by descending MCU demand on the host with
the smallest processing-power increase, then routes every host pair against
the load built up so far. Local search tries single-vnode relocations and
per-commodity re-routing and keeps only strict improvements.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Optional

import networkx as nx
import numpy as np

from .cost_model import (
    CapacityExceededError,
    LatencyTable,
    ObjectiveWeights,
    build_latency_table,
    link_power_per_kbps,
    node_latency,
)
from .domain import NodeId, PhysicalNetwork, ServiceRequest, VirtualNode
from .schemes import SchemeSpec, apply_node_scheme
from .solution import EmbeddingSolution, build_solution, commodity_demands, path_nodes, route_from_nodes

logger = logging.getLogger(__name__)

Path = list  # node sequence
EdgeCost = Callable[[NodeId, NodeId], Optional[float]]

# integer scale for the min-cost-flow pair search
_FLOW_SCALE = 1e6


class HeuristicError(RuntimeError):
    pass


class PlacementError(HeuristicError):
    """Some virtual node has no feasible host."""


class NoRouteError(HeuristicError):
    """A host pair has no path, or no link-disjoint pair under a dual scheme."""


@dataclass(frozen=True)
class HeuristicConfig:
    k_candidate_paths: int = 4
    local_search_budget: int = 60
    seed: int = 0
    node_disjoint: bool = False

    def __post_init__(self):
        if self.k_candidate_paths < 1:
            raise ValueError("k_candidate_paths must be >= 1")
        if self.local_search_budget < 0:
            raise ValueError("local_search_budget must be >= 0")

    def validate_for(self, scheme: SchemeSpec) -> None:
        if scheme.dual and self.k_candidate_paths < 2:
            raise ValueError(f"{scheme.name} needs k_candidate_paths >= 2")


class LoadState:
    """Arrival rates and active nodes of the routes placed so far."""

    def __init__(self, network: PhysicalNetwork, weights: ObjectiveWeights, table: LatencyTable):
        self.network = network
        self.weights = weights
        self.table = table
        self.arrivals: dict = {n: 0.0 for n in network.node_ids}
        self.users: Counter = Counter()
        self.cap = {n: min(network.node(n).traffic_capacity, table.max_rate) for n in network.node_ids}

    def copy(self) -> LoadState:
        out = LoadState.__new__(LoadState)
        out.network, out.weights, out.table, out.cap = self.network, self.weights, self.table, self.cap
        out.arrivals = dict(self.arrivals)
        out.users = Counter(self.users)
        return out

    def add(self, nodes: Path, flow: float) -> None:
        for n in nodes[1:]:
            self.arrivals[n] += flow
        self.users.update(set(nodes))

    def remove(self, nodes: Path, flow: float) -> None:
        for n in nodes[1:]:
            self.arrivals[n] = max(0.0, self.arrivals[n] - flow)
        self.users.subtract(set(nodes))
        for n in [n for n, c in self.users.items() if c <= 0]:
            del self.users[n]

    def edge_cost(self, u, v, flow: float, scale: float) -> Optional[float]:
        """Marginal objective of pushing ``flow`` over u->v; None if v overflows.

        Activation of the head node is charged here, of the tail only at the
        source (see ``source_cost``).
        """
        a = self.arrivals[v]
        if a + flow > self.cap[v] + 1e-9:
            return None
        w = self.weights
        dl = node_latency(self.table, a + flow) - node_latency(self.table, a)
        power = scale * flow * link_power_per_kbps(self.network.link(u, v))
        if v not in self.users:
            power += self.network.node(v).idle_net_power
        return w.alpha * dl + w.gamma * power

    def source_cost(self, s) -> float:
        return 0.0 if s in self.users else self.weights.gamma * self.network.node(s).idle_net_power

    def delta(self, paths) -> Optional[float]:
        """Exact objective change for adding ``(nodes, flow, scale)`` paths together."""
        extra: dict = {}
        power = 0.0
        touched = set()
        for nodes, flow, scale in paths:
            for u, v in zip(nodes, nodes[1:]):
                extra[v] = extra.get(v, 0.0) + flow
                power += scale * flow * link_power_per_kbps(self.network.link(u, v))
            touched.update(nodes)
        power += sum(self.network.node(n).idle_net_power for n in touched if n not in self.users)
        dl = 0.0
        for n, x in extra.items():
            a = self.arrivals[n]
            if a + x > self.cap[n] + 1e-9:
                return None
            dl += node_latency(self.table, a + x) - node_latency(self.table, a)
        return self.weights.alpha * dl + self.weights.gamma * power


def _cost_graph(network: PhysicalNetwork, cost: EdgeCost, banned_links=(), banned_nodes=()) -> nx.DiGraph:
    g = nx.DiGraph()
    g.add_nodes_from(n for n in network.node_ids if n not in banned_nodes)
    banned_links = set(banned_links)
    for u, v in network.directed_links():
        if (u, v) in banned_links or u in banned_nodes or v in banned_nodes:
            continue
        w = cost(u, v)
        if w is not None:
            g.add_edge(u, v, w=max(float(w), 0.0))
    return g


def _shortest(g: nx.DiGraph, s, t) -> Optional[Path]:
    try:
        return nx.dijkstra_path(g, s, t, weight="w")
    except (nx.NetworkXNoPath, nx.NodeNotFound):
        return None


def _k_shortest(g: nx.DiGraph, s, t, k: int) -> list[Path]:
    out = []
    try:
        for p in nx.shortest_simple_paths(g, s, t, weight="w"):
            out.append(p)
            if len(out) >= k:
                break
    except (nx.NetworkXNoPath, nx.NodeNotFound):
        pass
    return out


def _strip_loops(nodes: Path) -> Path:
    out: list = []
    pos: dict = {}
    for n in nodes:
        if n in pos:
            for m in out[pos[n] + 1:]:
                del pos[m]
            del out[pos[n] + 1:]
        else:
            pos[n] = len(out)
            out.append(n)
    return out


def _min_cost_pair(g: nx.DiGraph, s, t) -> Optional[tuple[Path, Path]]:
    """Cheapest two directed-link-disjoint s-t paths (unit-capacity min-cost flow)."""
    h = nx.DiGraph()
    for u, v, d in g.edges(data=True):
        # +1 per hop keeps every cycle strictly positive
        h.add_edge(u, v, capacity=1, weight=int(round(d["w"] * _FLOW_SCALE)) + 1)
    if s not in h or t not in h:
        return None
    h.nodes[s]["demand"] = -2
    h.nodes[t]["demand"] = 2
    try:
        flow = nx.min_cost_flow(h)
    except (nx.NetworkXUnfeasible, nx.NetworkXError):
        return None
    left = {(u, v) for u, nbrs in flow.items() for v, f in nbrs.items() if f > 0}
    paths = []
    for _ in range(2):
        walk, u = [s], s
        while u != t:
            nxt = min((e for e in left if e[0] == u), key=lambda e: repr(e[1]), default=None)
            if nxt is None:
                return None
            left.discard(nxt)
            u = nxt[1]
            walk.append(u)
        paths.append(_strip_loops(walk))
    return paths[0], paths[1]


def _path_cost(cost: EdgeCost, nodes: Path) -> float:
    return sum(cost(u, v) for u, v in zip(nodes, nodes[1:]))


def route_paths(
    network: PhysicalNetwork,
    source: NodeId,
    dest: NodeId,
    demand: float,
    mode: str = "single",
    edge_cost: Optional[EdgeCost] = None,
    k: int = 4,
    *,
    state: Optional[LoadState] = None,
    secondary_scale: float = 1.0,
    node_disjoint: bool = False,
) -> tuple[Path, Optional[Path]]:
    """Primary route, plus a link-disjoint secondary in ``"dual"`` mode.

    ``demand`` is the flow each path carries. Costs come from ``edge_cost``
    when given (a static ``(u, v) -> cost or None`` function), otherwise from
    the marginal objective against ``state`` (an empty network by default).
    In dual mode the candidates are the k cheapest primaries, each paired
    with the cheapest path avoiding its links, plus the min-cost disjoint
    pair; the pair with the lowest combined cost wins, earlier candidates
    winning ties.
    """
    if source == dest:
        raise ValueError("source and destination must differ")
    if mode not in ("single", "dual"):
        raise ValueError(f"mode must be 'single' or 'dual', got {mode!r}")
    if edge_cost is None:
        if state is None:
            state = LoadState(network, ObjectiveWeights(), build_latency_table())
        st = state

        def primary_cost(u, v):
            return st.edge_cost(u, v, demand, 1.0)

    else:
        primary_cost = edge_cost
    g = _cost_graph(network, primary_cost)
    if mode == "single":
        p = _shortest(g, source, dest)
        if p is None:
            raise NoRouteError(f"no feasible path {source}->{dest}")
        return p, None

    def pair_cost(p1, p2):
        if edge_cost is not None:
            return _path_cost(edge_cost, p1) + _path_cost(edge_cost, p2)
        return state.delta([(p1, demand, 1.0), (p2, demand, secondary_scale)])

    def second_cost_fn(p1):
        if edge_cost is not None:
            return edge_cost
        s2 = state.copy()
        s2.add(p1, demand)
        return lambda u, v: s2.edge_cost(u, v, demand, secondary_scale)

    candidates = []
    for p1 in _k_shortest(g, source, dest, k):
        banned = set(route_from_nodes(p1))
        inner = set(p1[1:-1]) if node_disjoint else ()
        p2 = _shortest(_cost_graph(network, second_cost_fn(p1), banned, inner), source, dest)
        if p2 is not None:
            candidates.append((p1, p2))
    if not node_disjoint:
        pair = _min_cost_pair(g, source, dest)
        if pair is not None:
            candidates += [pair, (pair[1], pair[0])]
    best, best_cost = None, math.inf
    for p1, p2 in candidates:
        if set(route_from_nodes(p1)) & set(route_from_nodes(p2)):
            continue
        c = pair_cost(p1, p2)
        if c is not None and c < best_cost - 1e-12:
            best, best_cost = (p1, p2), c
    if best is None:
        raise NoRouteError(f"no link-disjoint path pair {source}->{dest}")
    return best


# ---------------------------------------------------------------------------
# embedding
# ---------------------------------------------------------------------------

class _Context:
    def __init__(self, network, request, scheme, weights, table, config):
        self.network = network
        self.request = apply_node_scheme(request, scheme.node_level)
        self.scheme = scheme
        self.weights = weights
        self.table = table or build_latency_table()
        self.config = config or HeuristicConfig()
        self.config.validate_for(scheme)
        self.vnodes = {v.key: v for v in self.request.vnodes()}
        g = nx.Graph()
        g.add_nodes_from(network.node_ids)
        g.add_edges_from(network.directed_links())
        self.hops = dict(nx.all_pairs_shortest_path_length(g))
        # both orientations of every link exist, so two directed-link-disjoint
        # paths exist exactly when the pair is 2-edge-connected
        comps = nx.k_edge_components(g, 2) if scheme.dual else nx.connected_components(g)
        self.comp = {n: i for i, c in enumerate(sorted(comps, key=min)) for n in c}
        self.allowed = self._allowed_components()

    def _allowed_components(self) -> dict:
        """Components in which every vnode of a linked group has some host."""
        out = {}
        for bp in self.request.bps:
            g = nx.Graph()
            g.add_nodes_from(v.id for v in bp.vnodes)
            g.add_edges_from(l.endpoints for l in bp.vlinks if l.traffic_demand > 0)
            for group in nx.connected_components(g):
                sets = []
                for vid in group:
                    v = bp.vnode(vid)
                    sets.append({self.comp[n] for n in self.network.node_ids if self.fits(v, n, {})})
                ok = set.intersection(*sets) if sets else set()
                for vid in group:
                    out[(bp.id, vid)] = ok
        return out

    def routable(self, a, b) -> bool:
        return self.comp[a] == self.comp[b]

    def fits(self, v: VirtualNode, n, assignment, skip=None) -> bool:
        node = self.network.node(n)
        if v.required_function not in node.functions:
            return False
        if v.required_zone is not None and node.zone != v.required_zone:
            return False
        mcu = v.mcu_demand
        ram = v.ram_demand
        for k, h in assignment.items():
            if h != n or k == skip:
                continue
            if self.scheme.coexistence and k[0] == v.bp:
                return False
            mcu += self.vnodes[k].mcu_demand
            ram += self.vnodes[k].ram_demand
        return mcu <= node.mcu_capacity + 1e-9 and ram <= node.ram_capacity + 1e-9

    def linked(self, v: VirtualNode):
        out = []
        for l in self.request.vlinks():
            if l.bp != v.bp or l.traffic_demand <= 0:
                continue
            if l.endpoints[0] == v.id:
                out.append((v.bp, l.endpoints[1]))
            elif l.endpoints[1] == v.id:
                out.append((v.bp, l.endpoints[0]))
        return out

    def route_all(self, assignment, fixed=None):
        """Route every commodity; ``fixed`` routes are kept and loaded first."""
        share = self.scheme.path_share
        scale = self.scheme.secondary_energy_scale
        state = LoadState(self.network, self.weights, self.table)
        demands = commodity_demands(self.request, assignment)
        r1, r2 = {}, {}
        fixed = fixed or {}
        for key, (p1, p2) in fixed.items():
            state.add(p1, share * demands[key])
            if p2 is not None:
                state.add(p2, share * demands[key])
            r1[key], r2[key] = p1, p2
        order = sorted((k for k in demands if k not in fixed), key=lambda k: (-demands[k], repr(k)))
        for key in order:
            x = share * demands[key]
            p1, p2 = route_paths(
                self.network, key[0], key[1], x,
                mode="dual" if self.scheme.dual else "single",
                k=self.config.k_candidate_paths,
                state=state,
                secondary_scale=scale,
                node_disjoint=self.config.node_disjoint,
            )
            state.add(p1, x)
            if p2 is not None:
                state.add(p2, x)
            r1[key], r2[key] = p1, p2
        return r1, r2

    def build(self, assignment, r1, r2) -> EmbeddingSolution:
        routes1 = {k: route_from_nodes(p) for k, p in r1.items()}
        routes2 = {k: route_from_nodes(p) for k, p in r2.items() if p is not None}
        return build_solution(
            self.network, self.request, self.scheme, self.weights, self.table, assignment, routes1, routes2
        )

    def evaluate(self, assignment, fixed=None) -> Optional[EmbeddingSolution]:
        try:
            r1, r2 = self.route_all(assignment, fixed)
            return self.build(assignment, r1, r2)
        except (NoRouteError, CapacityExceededError):
            return None


def _incremental_cpu(network: PhysicalNetwork, v: VirtualNode, n, assignment) -> float:
    node = network.node(n)
    inc = node.max_cpu_power * v.mcu_demand / node.mcu_capacity
    if n not in assignment.values():
        inc += node.idle_cpu_power
    return inc


def _greedy_assignment(ctx: _Context) -> dict:
    order = sorted(ctx.request.vnodes(), key=lambda v: -v.mcu_demand)  # stable: request order on ties
    assignment: dict = {}
    rank = {n: i for i, n in enumerate(ctx.network.node_ids)}
    for v in order:
        placed_nbrs = [assignment[k] for k in ctx.linked(v) if k in assignment]
        best = None
        fitting = False
        for n in ctx.network.node_ids:
            if not ctx.fits(v, n, assignment):
                continue
            fitting = True
            if ctx.comp[n] not in ctx.allowed[v.key]:
                continue
            if not all(ctx.routable(n, h) for h in placed_nbrs):
                continue
            hops = sum(ctx.hops[n].get(h, 0) for h in placed_nbrs)
            score = (round(_incremental_cpu(ctx.network, v, n, assignment), 12), hops, rank[n])
            if best is None or score < best[0]:
                best = (score, n)
        if best is None and fitting:
            how = "link-disjoint routes" if ctx.scheme.dual else "a route"
            raise PlacementError(f"no host for virtual node {v.bp}/{v.id} is reachable by {how} from its neighbours")
        if best is None:
            raise PlacementError(
                f"no feasible node for virtual node {v.bp}/{v.id} "
                f"(function {v.required_function!r}, zone {v.required_zone!r}, MCU {v.mcu_demand}, RAM {v.ram_demand})"
            )
        assignment[v.key] = best[1]
    return assignment


def embed_greedy(
    network: PhysicalNetwork,
    request: ServiceRequest,
    scheme: SchemeSpec,
    weights: ObjectiveWeights = ObjectiveWeights(),
    latency_table: Optional[LatencyTable] = None,
    config: Optional[HeuristicConfig] = None,
) -> EmbeddingSolution:
    """Greedy placement and routing, then ``local_search`` with the config budget.

    Raises PlacementError or NoRouteError when the greedy pass gets stuck.
    """
    ctx = _Context(network, request, scheme, weights, latency_table, config)
    assignment = _greedy_assignment(ctx)
    r1, r2 = ctx.route_all(assignment)
    sol = ctx.build(assignment, r1, r2)
    sol.status = "heuristic"
    sol.optimal = False
    sol.stats.update(solver="heuristic", greedy_objective=sol.objective)
    if ctx.config.local_search_budget == 0:
        return sol
    return _local_search(ctx, sol, ctx.config.local_search_budget)


def local_search(
    solution: EmbeddingSolution,
    budget: int,
    weights: ObjectiveWeights,
    *,
    network: PhysicalNetwork,
    request: ServiceRequest,
    latency_table: Optional[LatencyTable] = None,
    config: Optional[HeuristicConfig] = None,
) -> EmbeddingSolution:
    """Improve ``solution`` with at most ``budget`` move evaluations.

    ``request`` is the request before node-level expansion. Budget 0 returns
    the input object itself.
    """
    if budget < 0:
        raise ValueError("budget must be >= 0")
    if budget == 0:
        return solution
    ctx = _Context(network, request, solution.scheme, weights, latency_table, config)
    return _local_search(ctx, solution, budget)


def _better(new: float, old: float) -> bool:
    return new < old - 1e-9 * max(1.0, abs(old))


def _local_search(ctx: _Context, start: EmbeddingSolution, budget: int) -> EmbeddingSolution:
    rng = np.random.default_rng(ctx.config.seed)
    best = start
    history = [start.objective]
    evals = 0
    keys = sorted(best.assignment)
    while evals < budget:
        improved = False
        # single-vnode relocation
        for i in rng.permutation(len(keys)):
            key = keys[int(i)]
            v = ctx.vnodes[key]
            for n in ctx.network.node_ids:
                if evals >= budget:
                    break
                if n == best.assignment[key] or not ctx.fits(v, n, best.assignment, skip=key):
                    continue
                trial = dict(best.assignment)
                trial[key] = n
                evals += 1
                cand = ctx.evaluate(trial)
                if cand is not None and _better(cand.objective, best.objective):
                    best = cand
                    history.append(best.objective)
                    improved = True
        # re-route one commodity against the others' load
        for key in list(best.commodities):
            if evals >= budget:
                break
            fixed = {
                k: (path_nodes(best.routes1[k]), path_nodes(best.routes2[k]) if k in best.routes2 else None)
                for k in best.commodities
                if k != key
            }
            evals += 1
            cand = ctx.evaluate(best.assignment, fixed)
            if cand is not None and _better(cand.objective, best.objective):
                best = cand
                history.append(best.objective)
                improved = True
        if not improved:
            break
    if best is not start:
        best.status = "heuristic"
        best.optimal = False
        best.stats.update(start.stats)
    best.stats.update(local_search_evals=evals, objective_history=history)
    return best
