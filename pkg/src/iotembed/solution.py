"""Decoded embeddings: node assignment, per-commodity routes, traffic and costs."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Optional

from .cost_model import (
    CapacityExceededError,
    CostBreakdown,
    LatencyTable,
    ObjectiveWeights,
    network_power,
    node_latency,
    processing_power,
    total_objective,
)
from .domain import NodeId, PhysicalNetwork, ServiceRequest
from .schemes import SchemeSpec, parse_scheme

Edge = tuple[NodeId, NodeId]
Route = tuple[Edge, ...]
Commodity = tuple[NodeId, NodeId]


@dataclass
class EmbeddingSolution:
    scheme: SchemeSpec
    assignment: dict[tuple[str, str], NodeId]
    commodities: dict[Commodity, float]
    routes1: dict[Commodity, Route]
    routes2: dict[Commodity, Route]
    path_flow1: dict[Commodity, float]
    path_flow2: dict[Commodity, float]
    link_traffic1: dict[Edge, float]
    link_traffic2: dict[Edge, float]
    node_arrivals: dict[NodeId, float]
    costs: CostBreakdown
    optimal: Optional[bool] = None
    status: str = "feasible"
    stats: dict = field(default_factory=dict)

    @property
    def objective(self) -> float:
        return self.costs.objective

    def canonical_key(self) -> tuple:
        """Order-independent identity of the embedding (assignment and routes)."""
        return (
            tuple(sorted(self.assignment.items())),
            tuple(sorted(self.routes1.items())),
            tuple(sorted(self.routes2.items())),
        )

    def to_dict(self, report: Optional[dict] = None) -> dict:
        out = {
            "scheme": self.scheme.name,
            "keep_alive_fraction": self.scheme.keep_alive_fraction,
            "coexistence": self.scheme.coexistence,
            "status": self.status,
            "optimal": self.optimal,
            "assignment": [
                {"bp": bp, "vnode": v, "node": n} for (bp, v), n in sorted(self.assignment.items())
            ],
            "commodities": [
                {
                    "source": c,
                    "dest": d,
                    "demand": dem,
                    "flow1": self.path_flow1.get((c, d), 0.0),
                    "flow2": self.path_flow2.get((c, d), 0.0),
                    "route1": path_nodes(self.routes1[(c, d)]) if (c, d) in self.routes1 else None,
                    "route2": path_nodes(self.routes2[(c, d)]) if (c, d) in self.routes2 else None,
                }
                for (c, d), dem in sorted(self.commodities.items())
            ],
            "costs": self.costs.as_dict(),
        }
        if report is not None:
            out["report"] = report
        return out


def path_nodes(route: Route) -> list[NodeId]:
    if not route:
        return []
    return [route[0][0]] + [f for _, f in route]


def route_from_nodes(nodes) -> Route:
    return tuple(zip(nodes[:-1], nodes[1:]))


def commodity_demands(request: ServiceRequest, assignment: Mapping) -> dict[Commodity, float]:
    """Aggregate virtual-link demand per ordered pair of distinct hosts."""
    out: dict[Commodity, float] = defaultdict(float)
    for l in request.vlinks():
        if l.traffic_demand <= 0:
            continue
        a, b = l.endpoints
        c, d = assignment[(l.bp, a)], assignment[(l.bp, b)]
        if c != d:
            out[(c, d)] += l.traffic_demand
    return dict(sorted(out.items()))


def build_solution(
    network: PhysicalNetwork,
    request: ServiceRequest,
    scheme: SchemeSpec,
    weights: ObjectiveWeights,
    table: LatencyTable,
    assignment: Mapping,
    routes1: Mapping[Commodity, Route],
    routes2: Optional[Mapping[Commodity, Route]] = None,
) -> EmbeddingSolution:
    """Derive traffic, arrivals and costs for an embedding of an expanded request.

    ``request`` must already carry the node-level replicas. Raises
    CapacityExceededError when a node is overloaded.
    """
    routes2 = dict(routes2 or {})
    commodities = commodity_demands(request, assignment)
    share = scheme.path_share
    flow1 = {k: share * dem for k, dem in commodities.items()}
    flow2 = {k: share * dem for k, dem in commodities.items()} if scheme.dual else {}
    t1: dict[Edge, float] = defaultdict(float)
    t2: dict[Edge, float] = defaultdict(float)
    for k in commodities:
        for e in routes1[k]:
            t1[e] += flow1[k]
        if scheme.dual:
            for e in routes2[k]:
                t2[e] += flow2[k]
    arrivals = {n: 0.0 for n in network.node_ids}
    for (e, f), v in sorted(t1.items()):
        arrivals[f] += v
    for (e, f), v in sorted(t2.items()):
        arrivals[f] += v
    for n, rate in arrivals.items():
        if rate > network.node(n).traffic_capacity + 1e-9:
            raise CapacityExceededError(f"node {n!r}: arrival {rate} kb/s exceeds traffic capacity")

    hosted = defaultdict(list)
    for (bp, vid), n in assignment.items():
        hosted[n].append(request.vnode(bp, vid))
    tpp = sum(processing_power(network.node(n), hosted[n]) for n in sorted(hosted))
    active = set()
    for r in list(routes1.values()) + list(routes2.values()):
        for e in r:
            active.update(e)
    scale = scheme.secondary_energy_scale
    tnp = network_power(network, dict(t1), {e: v * scale for e, v in t2.items()}, active=active)
    tl = sum(node_latency(table, arrivals[n]) for n in network.node_ids)
    costs = total_objective(weights, tl, tpp, tnp)
    return EmbeddingSolution(
        scheme=scheme,
        assignment=dict(sorted(assignment.items())),
        commodities=commodities,
        routes1={k: tuple(routes1[k]) for k in commodities},
        routes2={k: tuple(routes2[k]) for k in commodities} if scheme.dual else {},
        path_flow1=flow1,
        path_flow2=flow2,
        link_traffic1=dict(sorted(t1.items())),
        link_traffic2=dict(sorted(t2.items())),
        node_arrivals=arrivals,
        costs=costs,
    )


def solution_from_dict(doc: dict, network: PhysicalNetwork) -> EmbeddingSolution:
    """Rebuild a solution exactly as written (no recomputation), for checking."""
    scheme = parse_scheme(doc["scheme"], doc.get("keep_alive_fraction", 0.01), doc.get("coexistence", True))
    assignment = {(a["bp"], a["vnode"]): a["node"] for a in doc["assignment"]}
    commodities, r1, r2, f1, f2 = {}, {}, {}, {}, {}
    for c in doc["commodities"]:
        k = (c["source"], c["dest"])
        commodities[k] = c["demand"]
        f1[k] = c.get("flow1", 0.0)
        if c.get("route1") is not None:
            r1[k] = route_from_nodes(c["route1"])
        if c.get("route2") is not None:
            r2[k] = route_from_nodes(c["route2"])
            f2[k] = c.get("flow2", 0.0)
    t1: dict = defaultdict(float)
    t2: dict = defaultdict(float)
    for k, r in r1.items():
        for e in r:
            t1[e] += f1[k]
    for k, r in r2.items():
        for e in r:
            t2[e] += f2[k]
    arrivals = {n: 0.0 for n in network.node_ids}
    for (e, f), v in t1.items():
        arrivals[f] = arrivals.get(f, 0.0) + v
    for (e, f), v in t2.items():
        arrivals[f] = arrivals.get(f, 0.0) + v
    costs = doc["costs"]
    return EmbeddingSolution(
        scheme=scheme,
        assignment=assignment,
        commodities=commodities,
        routes1=r1,
        routes2=r2,
        path_flow1=f1,
        path_flow2=f2,
        link_traffic1=dict(t1),
        link_traffic2=dict(t2),
        node_arrivals=arrivals,
        costs=CostBreakdown(costs["TL"], costs["TPP"], costs["TNP"], costs["objective"]),
        optimal=doc.get("optimal"),
        status=doc.get("status", "feasible"),
    )
