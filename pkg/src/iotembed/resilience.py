"""Traffic-scheme semantics and the failure / PDR energy evaluator.

Energies here follow the network power accounting: idle power of every node
on a used route plus per-kb/s link power times the traffic each link carries
under the chosen mode. ``E_X`` below is the traffic energy of route X at the
commodity's full demand.

    single  D on the primary
    RDTR    D on the primary, keep-alive fraction of D on the secondary
    RPTR    D on both routes
    STR     D/2 on each route
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Optional

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
from .domain import NodeId, PhysicalNetwork, ServiceRequest
from .schemes import (  # noqa: F401  re-exported
    CANONICAL_SCHEMES,
    NODE_LEVELS,
    TRAFFIC_MODES,
    SchemeSpec,
    apply_node_scheme,
    parse_scheme,
)
from .milp.compiler import candidate_hosts
from .solution import EmbeddingSolution, build_solution, commodity_demands, path_nodes, route_from_nodes

logger = logging.getLogger(__name__)

MODES = TRAFFIC_MODES


class ModeMismatchError(ValueError):
    pass


@dataclass
class DeliveryOutcome:
    energy: float  # mW
    delivery_time: float  # ms, queueing only
    delivered_fraction: float = 1.0
    resend: dict = field(default_factory=dict)  # commodity -> resent kb/s
    notes: list[str] = field(default_factory=list)
    link_traffic: dict = field(default_factory=dict)  # kb/s carried per directed link


def _route_energy(network: PhysicalNetwork, route) -> float:
    """Link power per kb/s along ``route`` (multiply by a rate for mW)."""
    return sum(link_power_per_kbps(network.link(*e)) for e in route)


def _check_mode(solution: EmbeddingSolution, mode: str) -> None:
    if mode not in MODES:
        raise ModeMismatchError(f"unknown mode {mode!r}; expected one of {MODES}")
    dual = mode != "single"
    if dual and solution.commodities and not solution.routes2:
        raise ModeMismatchError(f"mode {mode} needs a dual-route solution")
    if not dual and solution.routes2:
        raise ModeMismatchError("single mode on a dual-route solution")


def _ka(solution, keep_alive_fraction):
    return solution.scheme.keep_alive_fraction if keep_alive_fraction is None else keep_alive_fraction


def _rates(mode: str, ka: float) -> tuple[float, float]:
    """Traffic multipliers (primary, secondary) of the demand, no failure."""
    return {"single": (1.0, 0.0), "RDTR": (1.0, ka), "RPTR": (1.0, 1.0), "STR": (0.5, 0.5)}[mode]


def _idle(network, solution, mode) -> float:
    nodes = set()
    for k in solution.commodities:
        nodes.update(path_nodes(solution.routes1[k]))
        if mode != "single":
            nodes.update(path_nodes(solution.routes2[k]))
    return sum(network.node(n).idle_net_power for n in nodes)


def _delivery_time(network, table, solution, traffic, used) -> float:
    """Slowest used route, summing node latency at each traversed node."""
    arrivals: dict = defaultdict(float)
    for (u, v), x in traffic.items():
        arrivals[v] += x
    worst = 0.0
    for k, paths in used.items():
        for r in paths:
            try:
                t = sum(node_latency(table, arrivals[v]) for _, v in r)
            except CapacityExceededError:
                t = float("inf")
            worst = max(worst, t)
    return worst


def _traffic(solution, rates: dict) -> dict:
    """Link traffic from per-commodity (primary, secondary) rates in kb/s."""
    out: dict = defaultdict(float)
    for k, (x1, x2) in rates.items():
        for e in solution.routes1[k]:
            out[e] += x1
        if x2:
            for e in solution.routes2[k]:
                out[e] += x2
    return out


def evaluate_no_failure(
    solution: EmbeddingSolution,
    mode: str,
    network: PhysicalNetwork,
    keep_alive_fraction: Optional[float] = None,
    table: Optional[LatencyTable] = None,
) -> DeliveryOutcome:
    """Energy and delivery time of ``solution``'s routes operated in ``mode``.

    The routes are taken as given, so one dual-route solution can be compared
    across RDTR, RPTR and STR.
    """
    _check_mode(solution, mode)
    ka = _ka(solution, keep_alive_fraction)
    table = table or build_latency_table()
    a, b = _rates(mode, ka)
    energy = _idle(network, solution, mode)
    rates = {}
    used = {}
    for k, dem in solution.commodities.items():
        # same grouping as evaluate_failure so the two agree to the last bit
        e1 = dem * _route_energy(network, solution.routes1[k])
        e2 = dem * _route_energy(network, solution.routes2[k]) if mode != "single" else 0.0
        energy += a * e1 + b * e2
        rates[k] = (a * dem, b * dem)
        used[k] = [solution.routes1[k]] + ([solution.routes2[k]] if mode in ("RPTR", "STR") else [])
    traffic = _traffic(solution, rates)
    t = _delivery_time(network, table, solution, traffic, used)
    return DeliveryOutcome(energy, t, 1.0, {k: 0.0 for k in solution.commodities}, [], dict(traffic))


def evaluate_failure(
    solution: EmbeddingSolution,
    mode: str,
    network: PhysicalNetwork,
    failed_link: tuple[NodeId, NodeId],
    failure_fraction: float = 0.0,
    keep_alive_fraction: Optional[float] = None,
    table: Optional[LatencyTable] = None,
) -> DeliveryOutcome:
    """Energy when ``failed_link`` breaks after a fraction f of the data got through.

    For a commodity whose primary route A holds the link (survivor B):

        single  E_A + (1-f) E_A          resent on A after recovery
        RDTR    E_A + (1-f+ka) E_B       switch to the backup
        RPTR    E_A + E_B                unchanged, the replica arrives
        STR     E_A/2 + E_B/2 + (1-f) E_B/2

    and symmetrically when the secondary holds it. A failed RDTR backup only
    loses keep-alive traffic, so that commodity is unchanged. Delivery time
    is queueing latency only; the detection timeout is not modelled.
    """
    _check_mode(solution, mode)
    f = float(failure_fraction)
    if not 0.0 <= f <= 1.0:
        raise ValueError(f"failure_fraction must lie in [0, 1], got {f}")
    failed_link = tuple(failed_link)
    if not network.has_link(*failed_link):
        raise KeyError(f"no link {failed_link!r}")
    ka = _ka(solution, keep_alive_fraction)
    table = table or build_latency_table()
    a, b = _rates(mode, ka)
    energy = _idle(network, solution, mode)
    resend = {}
    rates = {}
    used = {}
    for k, dem in solution.commodities.items():
        r1 = solution.routes1[k]
        r2 = solution.routes2.get(k, ())
        on1, on2 = failed_link in r1, mode != "single" and failed_link in r2
        if on1 and on2:
            raise ValueError(f"link {failed_link} lies on both routes of {k}")
        e1 = dem * _route_energy(network, r1)
        e2 = dem * _route_energy(network, r2) if mode != "single" else 0.0
        x1, x2 = a * dem, b * dem
        extra = 0.0
        paths = [r1] + ([r2] if mode in ("RPTR", "STR") else [])
        if mode == "single" and on1:
            extra = (1 - f) * dem
            cost = (2 - f) * e1
            x1 += extra
        elif mode == "RDTR" and on1:
            extra = (1 - f) * dem
            cost = e1 + (1 - f + ka) * e2
            x2 += extra
            paths = [r2]
        elif mode == "STR" and (on1 or on2):
            extra = (1 - f) * 0.5 * dem
            survivor = e2 if on1 else e1
            cost = 0.5 * e1 + 0.5 * e2 + (1 - f) * 0.5 * survivor
            if on1:
                x2 += extra
                paths = [r2]
            else:
                x1 += extra
                paths = [r1]
        else:
            cost = a * e1 + b * e2
        energy += cost
        resend[k] = extra
        rates[k] = (x1, x2)
        used[k] = paths
    traffic = _traffic(solution, rates)
    t = _delivery_time(network, table, solution, traffic, used)
    notes = ["delivery_time excludes failure detection and recovery delay"]
    return DeliveryOutcome(energy, t, 1.0, resend, notes, dict(traffic))


def _pdr_terms(solution: EmbeddingSolution, network: PhysicalNetwork, ka: float):
    """(idle, E1, E2) summed over commodities at full demand."""
    if not solution.routes2 and solution.commodities:
        raise ModeMismatchError("the PDR sweep needs a dual-route solution")
    e1 = sum(d * _route_energy(network, solution.routes1[k]) for k, d in solution.commodities.items())
    e2 = sum(d * _route_energy(network, solution.routes2[k]) for k, d in solution.commodities.items())
    return _idle(network, solution, "RDTR"), e1, e2


def pdr_expected(idle: float, e1: float, e2: float, ka: float, p: float) -> tuple[float, float]:
    """Expected (RDTR, STR) energy when each route delivers with probability p.

    RDTR resends everything on the backup when the primary fails; STR resends
    the lost half on the other route, whichever route failed.
    """
    q = 1.0 - p
    rdtr = idle + e1 + ka * e2 + q * e2
    st = idle + 0.5 * (e1 + e2) + q * 0.5 * (e1 + e2)
    return rdtr, st


def pdr_sweep(
    solution: EmbeddingSolution,
    pdr_values: Iterable[float],
    network: PhysicalNetwork,
    keep_alive_fraction: Optional[float] = None,
) -> list[tuple[float, float, float]]:
    """Rows ``(p, E_RDTR, E_STR)`` of expected energy, one per PDR value."""
    ka = _ka(solution, keep_alive_fraction)
    idle, e1, e2 = _pdr_terms(solution, network, ka)
    rows = []
    for p in pdr_values:
        p = float(p)
        if not 0.0 < p <= 1.0:
            raise ValueError(f"PDR must lie in (0, 1], got {p}")
        rows.append((p, *pdr_expected(idle, e1, e2, ka, p)))
    return rows


def pdr_crossover(
    solution: EmbeddingSolution, network: PhysicalNetwork, keep_alive_fraction: Optional[float] = None
) -> Optional[float]:
    """PDR at which the RDTR and STR curves meet, or None if they never do in (0, 1]."""
    ka = _ka(solution, keep_alive_fraction)
    idle, e1, e2 = _pdr_terms(solution, network, ka)
    r0, s0 = pdr_expected(idle, e1, e2, ka, 1.0)
    r1, s1 = pdr_expected(idle, e1, e2, ka, 0.0)
    # both lines are linear in q = 1 - p
    slope = (r1 - r0) - (s1 - s0)
    if slope == 0:
        return None
    q = (s0 - r0) / slope
    p = 1.0 - q
    return p if 0.0 < p <= 1.0 else None


# ---------------------------------------------------------------------------
# ELRU baseline
# ---------------------------------------------------------------------------

def _random_assignment(network, req, scheme, rng, hosts):
    asg: dict = {}
    used_mcu: dict = defaultdict(float)
    used_ram: dict = defaultdict(float)
    for v in req.vnodes():
        options = []
        for n in hosts[v.key]:
            node = network.node(n)
            if scheme.coexistence and any(h == n and k[0] == v.bp for k, h in asg.items()):
                continue
            if used_mcu[n] + v.mcu_demand > node.mcu_capacity + 1e-9:
                continue
            if used_ram[n] + v.ram_demand > node.ram_capacity + 1e-9:
                continue
            options.append(n)
        if not options:
            return None
        n = options[int(rng.integers(len(options)))]
        asg[v.key] = n
        used_mcu[n] += v.mcu_demand
        used_ram[n] += v.ram_demand
    return asg


def elru_baseline(
    network: PhysicalNetwork,
    request: ServiceRequest,
    weights: ObjectiveWeights = ObjectiveWeights(),
    table: Optional[LatencyTable] = None,
    seeds: Iterable[int] = range(20),
    node_level: str = "CCNR",
    max_draws: int = 200,
) -> dict:
    """Random feasible placement with fewest-hop single-path routing.

    Returns the mean TL/TPP/TNP/objective over the seeds that produced a
    feasible embedding, plus the individual solutions.
    """
    table = table or build_latency_table()
    scheme = SchemeSpec(node_level, "single")
    req = apply_node_scheme(request, node_level)
    hosts = {v.key: candidate_hosts(network, v) for v in req.vnodes()}
    g = nx.DiGraph()
    g.add_nodes_from(network.node_ids)
    g.add_edges_from(network.directed_links())
    sols = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        for _ in range(max_draws):
            asg = _random_assignment(network, req, scheme, rng, hosts)
            if asg is None:
                continue
            try:
                routes = {
                    k: route_from_nodes(nx.shortest_path(g, k[0], k[1]))
                    for k in commodity_demands(req, asg)
                }
                sol = build_solution(network, req, scheme, weights, table, asg, routes)
            except (nx.NetworkXNoPath, CapacityExceededError):
                continue
            sol.status = "baseline"
            sols.append(sol)
            break
    if not sols:
        return {"runs": 0, "solutions": []}
    mean = {t: float(np.mean([getattr(s.costs, t) for s in sols])) for t in ("TL", "TPP", "TNP", "objective")}
    return {"runs": len(sols), "solutions": sols, **mean}
