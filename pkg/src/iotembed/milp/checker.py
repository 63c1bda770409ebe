"""Independent verification of an embedding, family by family.

Works only from the scenario, the scheme and the decoded solution; it never
looks at a compiled instance. Family labels are the constraint numbers of the
model, plus ``costs`` for the objective breakdown.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional

from ..cost_model import (
    CapacityExceededError,
    LatencyTable,
    ObjectiveWeights,
    build_latency_table,
    link_power_per_kbps,
    node_latency,
    processing_power,
)
from ..domain import PhysicalNetwork, ServiceRequest
from ..schemes import SchemeSpec, apply_node_scheme
from ..solution import EmbeddingSolution, path_nodes

TOL = 1e-6


@dataclass
class FamilyResult:
    label: str
    description: str
    violations: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


@dataclass
class CheckReport:
    families: dict[str, FamilyResult]

    @property
    def all_pass(self) -> bool:
        return all(f.passed for f in self.families.values())

    def failed(self) -> list[str]:
        return [k for k, f in self.families.items() if not f.passed]

    def to_dict(self) -> dict:
        return {
            "all_pass": self.all_pass,
            "families": {
                k: {"description": f.description, "pass": f.passed, "violations": f.violations}
                for k, f in self.families.items()
            },
        }

    def summary(self) -> str:
        lines = []
        for k, f in self.families.items():
            status = "pass" if f.passed else f"FAIL ({len(f.violations)})"
            lines.append(f"({k}) {f.description}: {status}")
            lines.extend(f"    {v}" for v in f.violations[:10])
        return "\n".join(lines)


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= TOL * max(1.0, abs(a), abs(b))


def check_solution(
    network: PhysicalNetwork,
    request: ServiceRequest,
    scheme: SchemeSpec,
    solution: EmbeddingSolution,
    weights: Optional[ObjectiveWeights] = None,
    table: Optional[LatencyTable] = None,
) -> CheckReport:
    """Evaluate every constraint family directly on ``solution``.

    ``request`` is the request before node-level expansion. Costs are checked
    when ``weights`` are given (default latency table if ``table`` is None).
    """
    req = apply_node_scheme(request, scheme.node_level)
    fam: dict[str, FamilyResult] = {}

    def family(label, desc):
        fam[label] = FamilyResult(label, desc)
        return fam[label].violations

    asg = solution.assignment
    vnodes = {v.key: v for v in req.vnodes()}

    # node embedding ---------------------------------------------------------
    bad = family("5", "each virtual node embedded on exactly one existing node")
    for k in vnodes:
        if k not in asg:
            bad.append(f"virtual node {k} is not embedded")
        elif not network.has_node(asg[k]):
            bad.append(f"virtual node {k} on unknown node {asg[k]!r}")
    for k in asg:
        if k not in vnodes:
            bad.append(f"assignment for unknown virtual node {k}")
    placed = {k: n for k, n in asg.items() if k in vnodes and network.has_node(n)}

    bad = family("6", "no node hosts two virtual nodes of one business process")
    if scheme.coexistence:
        seen: dict = {}
        for (bp, vid), n in sorted(placed.items()):
            other = seen.setdefault((bp, n), vid)
            if other != vid:
                bad.append(f"BP {bp}: {other} and {vid} share node {n}")

    hosted = defaultdict(list)
    for k, n in placed.items():
        hosted[n].append(vnodes[k])
    bad9 = family("9", "MCU capacity")
    bad10 = family("10", "RAM capacity")
    for n in sorted(hosted):
        node = network.node(n)
        mcu = sum(v.mcu_demand for v in hosted[n])
        ram = sum(v.ram_demand for v in hosted[n])
        if mcu > node.mcu_capacity + TOL:
            bad9.append(f"node {n}: MCU {mcu} > {node.mcu_capacity}")
        if ram > node.ram_capacity + TOL:
            bad10.append(f"node {n}: RAM {ram} > {node.ram_capacity}")

    bad = family("11-12", "required function offered by the host")
    for k, n in sorted(placed.items()):
        if vnodes[k].required_function not in network.node(n).functions:
            bad.append(f"virtual node {k} needs {vnodes[k].required_function!r}, node {n} lacks it")
    bad = family("13-14", "required zone matches the host")
    for k, n in sorted(placed.items()):
        z = vnodes[k].required_zone
        if z is not None and network.node(n).zone != z:
            bad.append(f"virtual node {k} needs zone {z!r}, node {n} is in {network.node(n).zone!r}")

    # link embedding -------------------------------------------------------------
    bad = family("15-16", "host-pair demand equals the embedded virtual links")
    expected: dict = defaultdict(float)
    for l in req.vlinks():
        ka, kb = (l.bp, l.endpoints[0]), (l.bp, l.endpoints[1])
        if l.traffic_demand <= 0 or ka not in placed or kb not in placed:
            continue
        c, d = placed[ka], placed[kb]
        if c != d:
            expected[(c, d)] += l.traffic_demand
    for k in sorted(set(expected) | set(solution.commodities), key=repr):
        got = solution.commodities.get(k, 0.0)
        if not _close(got, expected.get(k, 0.0)):
            bad.append(f"pair {k}: demand {got}, expected {expected.get(k, 0.0)}")

    # routing --------------------------------------------------------------------
    share = scheme.path_share
    paths = (1, 2) if scheme.dual else (1,)
    cons_label = {1: "35", 2: "36"} if scheme.traffic_mode == "STR" else {1: "17", 2: "22"}
    split_label = {1: "21", 2: "26"}
    routes = {1: solution.routes1, 2: solution.routes2}
    flows = {1: solution.path_flow1, 2: solution.path_flow2}
    for p in paths:
        cons = family(cons_label[p], f"route {p} carries {share:g} x demand from source to destination")
        split = family(split_label[p], f"route {p} is a single simple path")
        for k, dem in sorted(solution.commodities.items(), key=repr):
            c, d = k
            r = routes[p].get(k)
            if r is None or len(r) == 0:
                cons.append(f"pair {k}: no route {p}")
                continue
            for e in r:
                if not network.has_link(*e):
                    cons.append(f"pair {k}: route {p} uses nonexistent link {e}")
            if any(a[1] != b[0] for a, b in zip(r, r[1:])):
                cons.append(f"pair {k}: route {p} is not contiguous")
            if r[0][0] != c or r[-1][1] != d:
                cons.append(f"pair {k}: route {p} runs {r[0][0]}->{r[-1][1]}")
            f = flows[p].get(k)
            if f is None or not _close(f, share * dem):
                cons.append(f"pair {k}: route {p} flow {f}, expected {share * dem}")
            nodes = path_nodes(r)
            if len(set(nodes)) != len(nodes):
                split.append(f"pair {k}: route {p} revisits a node {nodes}")
        for k in sorted(set(routes[p]) - set(solution.commodities), key=repr):
            cons.append(f"route {p} for pair {k} that carries no demand")
    if not scheme.dual and solution.routes2:
        family("22", "single-path schemes have no alternative route").append(
            f"{len(solution.routes2)} alternative route(s) present"
        )

    bad = family("27", "primary and alternative routes share no directed link")
    if scheme.dual:
        for k in sorted(solution.commodities, key=repr):
            shared = set(routes[1].get(k, ())) & set(routes[2].get(k, ()))
            for e in sorted(shared):
                bad.append(f"pair {k}: both routes use link {e}")

    # traffic identities -------------------------------------------------------------
    sums = {1: defaultdict(float), 2: defaultdict(float)}
    for p in paths:
        for k, r in routes[p].items():
            for e in r:
                sums[p][e] += flows[p].get(k, 0.0)
    maps = {1: solution.link_traffic1, 2: solution.link_traffic2}
    for p, label in ((1, "18"), (2, "23")):
        bad = family(label, f"link traffic {p} equals the sum of route-{p} flows")
        for e in sorted(set(sums[p]) | set(maps[p])):
            if not _close(maps[p].get(e, 0.0), sums[p].get(e, 0.0)):
                bad.append(f"link {e}: traffic {maps[p].get(e, 0.0)}, routes give {sums[p].get(e, 0.0)}")

    arrivals = defaultdict(float)
    for p in (1, 2):
        for (_, f), v in sums[p].items():
            arrivals[f] += v
    bad = family("30", "node arrival rate equals incoming link traffic")
    for n in network.node_ids:
        got = solution.node_arrivals.get(n, 0.0)
        if not _close(got, arrivals.get(n, 0.0)):
            bad.append(f"node {n}: arrival {got}, links give {arrivals.get(n, 0.0)}")
    bad = family("31", "node arrival rate within traffic capacity")
    for n in network.node_ids:
        if arrivals.get(n, 0.0) > network.node(n).traffic_capacity + TOL:
            bad.append(f"node {n}: arrival {arrivals[n]} > {network.node(n).traffic_capacity}")

    table = table or build_latency_table()
    bad = family("32-34", "arrival rate maps to a latency level")
    tl = 0.0
    for n in network.node_ids:
        try:
            tl += node_latency(table, arrivals.get(n, 0.0))
        except CapacityExceededError:
            bad.append(f"node {n}: arrival {arrivals[n]} above the top latency level {table.max_rate}")

    if weights is not None:
        bad = family("costs", "reported TL/TPP/TNP and objective match a recomputation")
        tpp = 0.0
        for n in sorted(hosted):
            try:
                tpp += processing_power(network.node(n), hosted[n])
            except CapacityExceededError:
                pass  # already reported under (9)
        active = set()
        for p in paths:
            for r in routes[p].values():
                for e in r:
                    active.update(e)
        tnp = sum(network.node(n).idle_net_power for n in active if network.has_node(n))
        scale = {1: 1.0, 2: scheme.secondary_energy_scale}
        for p in paths:
            for e, v in sums[p].items():
                if network.has_link(*e):
                    tnp += scale[p] * v * link_power_per_kbps(network.link(*e))
        c = solution.costs
        obj = weights.alpha * tl + weights.beta * tpp + weights.gamma * tnp
        for name, got, want in (("TL", c.TL, tl), ("TPP", c.TPP, tpp), ("TNP", c.TNP, tnp), ("objective", c.objective, obj)):
            if not _close(got, want):
                bad.append(f"{name}: reported {got}, recomputed {want}")
        if not _close(c.objective, weights.alpha * c.TL + weights.beta * c.TPP + weights.gamma * c.TNP):
            bad.append("objective is not alpha*TL + beta*TPP + gamma*TNP of the reported terms")
    return CheckReport(fam)

