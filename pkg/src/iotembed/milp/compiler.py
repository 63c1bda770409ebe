"""Build the embedding MILP for a scenario and resilience scheme.

Variable families and constraint tags follow the model's numbering
(5-36); helper definitions of TL, TPP and TNP are tagged ``aux``.

Canonical names (one per concept):

    NE    node embedding indicator          LE/X  link embedding / XOR dummy
    F/Z   function / zone indicators        TRFP  embedded demand per host pair
    R1/R2 primary / secondary route flow    I1/I2 route indicators
    TRFL1/TRFL2 per-link traffic            TRFN  node arrival rate
    LI    arrival-rate level indicator      W     node latency
    PM/TM processing / network module on
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..cost_model import LatencyTable, ObjectiveWeights, link_power_per_kbps
from ..domain import NodeId, PhysicalNetwork, ServiceRequest, VirtualNode
from ..schemes import REPLICA_SUFFIX, SchemeSpec, apply_node_scheme
from .instance import MilpInstance

NOMINAL_BIG_M = 1e8


@dataclass
class Layout:
    """Name maps from model concepts to instance variables (decode only)."""

    network: PhysicalNetwork
    request: ServiceRequest  # expanded by the node-level scheme
    scheme: SchemeSpec
    weights: ObjectiveWeights
    table: LatencyTable
    ne: dict = field(default_factory=dict)  # (vkey, node) -> name
    route: dict = field(default_factory=dict)  # (path, c, d, e, f) -> (flow name, indicator name)
    trfp: dict = field(default_factory=dict)  # (c, d) -> name
    pairs: list = field(default_factory=list)
    levels: list = field(default_factory=list)
    flow_floor: float = 1.0


def candidate_hosts(network: PhysicalNetwork, v: VirtualNode) -> list[NodeId]:
    """Nodes that could host ``v`` on their own (function, zone, capacities)."""
    out = []
    for c in network.node_ids:
        n = network.node(c)
        if v.required_function not in n.functions:
            continue
        if v.required_zone is not None and n.zone != v.required_zone:
            continue
        if v.mcu_demand > n.mcu_capacity or v.ram_demand > n.ram_capacity:
            continue
        out.append(c)
    return out


def compile_instance(
    network: PhysicalNetwork,
    request: ServiceRequest,
    scheme: SchemeSpec,
    weights: ObjectiveWeights,
    table: LatencyTable,
    big_m: Optional[float] = None,
    flow_floor: Optional[float] = None,
    cuts: bool = True,
) -> MilpInstance:
    """Compile the scenario into a MilpInstance.

    ``big_m=None`` uses the tightest valid constant for each linking
    constraint (number of terms, or the largest possible flow) instead of one
    global constant; pass ``big_m=1e8`` for the literal formulation. The
    route-indicator floor (minimum flow on a used link) defaults to
    ``min(1 kb/s, smallest positive per-route flow)``.

    Host pairs that no virtual link could ever map onto (endpoint function,
    zone or single-node capacity mismatch) get no link-embedding or routing
    variables; their embedding indicators are forced to zero anyway.

    With ``cuts`` on, extra rows tagged ``aux`` (names ``cut_*``) tighten
    the LP relaxation. A module indicator is at least every indicator it
    aggregates; a node entered by some route selects a latency level; the
    route indicators of a used host pair form a unit path and an unused pair
    carries no route (this only removes detached circulations, which never
    lower the objective); a replica is
    hosted at a higher node index than its original; and for equal-flow
    route pairs the primary leaves the source towards the lower-indexed
    neighbour. None of them changes the optimal objective.
    """
    req = apply_node_scheme(request, scheme.node_level)
    inst = MilpInstance(big_m=NOMINAL_BIG_M if big_m is None else float(big_m))
    nodes = network.node_ids
    nidx = {n: i for i, n in enumerate(nodes)}
    links = network.directed_links()
    share = scheme.path_share
    paths = (1, 2) if scheme.dual else (1,)
    layout = Layout(network, req, scheme, weights, table)
    inst.context = layout

    vlist = []  # (bp index, vnode index, vnode)
    for bi, bp in enumerate(req.bps):
        for ai, v in enumerate(bp.vnodes):
            vlist.append((bi, ai, v))
    vname = {v.key: f"b{bi}_v{ai}" for bi, ai, v in vlist}
    cand = {v.key: candidate_hosts(network, v) for _, _, v in vlist}
    for _, _, v in vlist:
        if not cand[v.key]:
            inst.hints.append(
                f"virtual node {v.bp}/{v.id} has no feasible host (function={v.required_function!r}, "
                f"zone={v.required_zone!r}, mcu={v.mcu_demand}, ram={v.ram_demand}) [11-14]"
            )

    # --- node embedding (5)-(14) -------------------------------------------
    for _, _, v in vlist:
        for c in nodes:
            layout.ne[(v.key, c)] = inst.add_var(f"NE_{vname[v.key]}_n{nidx[c]}", "binary")
    pm = {c: inst.add_var(f"PM_n{nidx[c]}", "binary") for c in nodes}

    for _, _, v in vlist:
        inst.add_con([(layout.ne[(v.key, c)], 1) for c in nodes], "=", 1, "5")
    if cuts:
        # a replica and its original are interchangeable (same requirements,
        # mirrored links), so order their hosts by node index
        gap = 1 if scheme.coexistence else 0
        keys = {v.key for _, _, v in vlist}
        for _, _, v in vlist:
            if not v.id.endswith(REPLICA_SUFFIX):
                continue
            orig = (v.bp, v.id[: -len(REPLICA_SUFFIX)])
            if orig not in keys:
                continue
            terms = [(layout.ne[(orig, c)], i) for i, c in enumerate(nodes)]
            terms += [(layout.ne[(v.key, c)], -i) for i, c in enumerate(nodes)]
            inst.add_con(terms, "<=", -gap, "aux", name=f"cut_sym_{vname[v.key]}")
    if scheme.coexistence:
        for bp in req.bps:
            for c in nodes:
                inst.add_con([(layout.ne[(v.key, c)], 1) for v in bp.vnodes], "<=", 1, "6")
    m8 = len(vlist) if big_m is None else inst.big_m
    for c in nodes:
        hosted = [(layout.ne[(v.key, c)], 1) for _, _, v in vlist]
        inst.add_con(hosted + [(pm[c], -1)], ">=", 0, "7")
        inst.add_con(hosted + [(pm[c], -m8)], "<=", 0, "8")
        if cuts:
            for _, _, v in vlist:
                inst.add_con([(pm[c], 1), (layout.ne[(v.key, c)], -1)], ">=", 0, "aux", name=f"cut_pm_{vname[v.key]}_n{nidx[c]}")
    for c in nodes:
        n = network.node(c)
        inst.add_con([(layout.ne[(v.key, c)], v.mcu_demand) for _, _, v in vlist], "<=", n.mcu_capacity, "9")
        inst.add_con([(layout.ne[(v.key, c)], v.ram_demand) for _, _, v in vlist], "<=", n.ram_capacity, "10")
    for _, _, v in vlist:
        for c in nodes:
            n = network.node(c)
            fvar = inst.add_var(f"F_{vname[v.key]}_n{nidx[c]}", "binary")
            inst.add_con([(fvar, 1), (layout.ne[(v.key, c)], -1)], "=", 0, "11")
            inst.add_con([(fvar, 1)], "<=", 1.0 if v.required_function in n.functions else 0.0, "12")
            if v.required_zone is not None:
                zvar = inst.add_var(f"Z_{vname[v.key]}_n{nidx[c]}", "binary")
                inst.add_con([(zvar, 1), (layout.ne[(v.key, c)], -1)], "=", 0, "13")
                inst.add_con([(zvar, 1)], "<=", 1.0 if n.zone == v.required_zone else 0.0, "14")

    # --- link embedding (15)-(16) ------------------------------------------
    pair_terms: dict[tuple, list] = {}
    pair_ub: dict[tuple, float] = {}
    pair_load: dict[tuple, dict] = {}
    positive = []
    le_at_a: dict[tuple, list] = {}
    le_at_b: dict[tuple, list] = {}
    for li, l in enumerate(req.vlinks()):
        if l.traffic_demand <= 0:
            continue
        positive.append(l.traffic_demand)
        ka, kb = (l.bp, l.endpoints[0]), (l.bp, l.endpoints[1])
        for c in cand[ka]:
            for d in cand[kb]:
                if c == d:
                    continue
                tag = f"l{li}_n{nidx[c]}_n{nidx[d]}"
                le = inst.add_var(f"LE_{tag}", "binary")
                x = inst.add_var(f"X_{tag}", "binary")
                inst.add_con(
                    [(layout.ne[(ka, c)], 1), (layout.ne[(kb, d)], 1), (x, -1), (le, -2)], "=", 0, "15"
                )
                pair_terms.setdefault((c, d), []).append((le, l.traffic_demand))
                per_ends = pair_load.setdefault((c, d), {})
                ends = (l.bp, l.endpoints) if scheme.coexistence else (l.bp, li)
                per_ends[ends] = per_ends.get(ends, 0.0) + l.traffic_demand
                if cuts:
                    inst.add_con(
                        [(le, 1), (layout.ne[(ka, c)], -1), (layout.ne[(kb, d)], -1)], ">=", -1, "aux",
                        name=f"cut_and_{tag}",
                    )
                le_at_a.setdefault((li, c), []).append(le)
                le_at_b.setdefault((li, d), []).append(le)
        if cuts:
            # endpoints of one BP never share a host under coexistence, so a
            # host of one endpoint embeds the link towards exactly one host of
            # the other; without coexistence only the upper bound holds
            sense = "=" if scheme.coexistence else "<="
            for c in cand[ka]:
                terms = [(v, 1) for v in le_at_a.get((li, c), [])]
                inst.add_con(terms + [(layout.ne[(ka, c)], -1)], sense, 0, "aux", name=f"cut_src_l{li}_n{nidx[c]}")
            for d in cand[kb]:
                terms = [(v, 1) for v in le_at_b.get((li, d), [])]
                inst.add_con(terms + [(layout.ne[(kb, d)], -1)], sense, 0, "aux", name=f"cut_dst_l{li}_n{nidx[d]}")
    pairs = sorted(pair_terms)
    layout.pairs = pairs
    # Largest demand a host pair can carry. Under coexistence two virtual
    # links of one BP share a host pair only if they join the same two
    # virtual nodes, so each BP contributes its heaviest such bundle.
    for k in pairs:
        best: dict[str, float] = {}
        for (bp, _), load in pair_load[k].items():
            best[bp] = max(best.get(bp, 0.0), load) if scheme.coexistence else best.get(bp, 0.0) + load
        pair_ub[k] = sum(best.values())
    for c, d in pairs:
        t = inst.add_var(f"TRFP_n{nidx[c]}_n{nidx[d]}", "continuous", pair_ub[(c, d)])
        layout.trfp[(c, d)] = t
        inst.add_con(pair_terms[(c, d)] + [(t, -1)], "=", 0, "16")

    if flow_floor is None:
        flow_floor = min([1.0] + [share * p for p in positive])
    layout.flow_floor = flow_floor

    # --- routing (17)-(27), (35)-(36) ----------------------------------------
    conservation_tag = {1: "35", 2: "36"} if scheme.traffic_mode == "STR" else {1: "17", 2: "22"}
    link_tag = {1: "18", 2: "23"}
    lower_tag = {1: "19", 2: "24"}
    upper_tag = {1: "20", 2: "25"}
    nosplit_tag = {1: "21", 2: "26"}
    out_links = {c: [l for l in links if l[0] == c] for c in nodes}
    in_links = {c: [l for l in links if l[1] == c] for c in nodes}
    link_flow_terms = {(p, l): [] for p in paths for l in links}
    for c, d in pairs:
        pname = f"n{nidx[c]}_n{nidx[d]}"
        m_flow = share * pair_ub[(c, d)] if big_m is None else inst.big_m
        if cuts:
            used = inst.add_var(f"U_{pname}", "binary")
            for le, _ in pair_terms[(c, d)]:
                inst.add_con([(used, 1), (le, -1)], ">=", 0, "aux", name=f"cut_used_{le}")
            inst.add_con([(used, 1)] + [(le, -1) for le, _ in pair_terms[(c, d)]], "<=", 0, "aux", name=f"cut_used_{pname}")
        for p in paths:
            for e, f in links:
                r = inst.add_var(f"R{p}_{pname}_e{nidx[e]}_f{nidx[f]}", "continuous")
                ind = inst.add_var(f"I{p}_{pname}_e{nidx[e]}_f{nidx[f]}", "binary")
                layout.route[(p, c, d, e, f)] = (r, ind)
                link_flow_terms[(p, (e, f))].append((r, 1))
                inst.add_con([(r, 1), (ind, -flow_floor)], ">=", 0, lower_tag[p])
                inst.add_con([(r, 1), (ind, -m_flow)], "<=", 0, upper_tag[p])
                if cuts:
                    # no route (hence no detached circulation) for an unused pair
                    inst.add_con([(ind, 1), (used, -1)], "<=", 0, "aux", name=f"cut_use_{ind}")
            for e in nodes:
                terms = [(layout.route[(p, c, d, *l)][0], 1) for l in out_links[e]]
                terms += [(layout.route[(p, c, d, *l)][0], -1) for l in in_links[e]]
                if e == c:
                    terms.append((layout.trfp[(c, d)], -share))
                elif e == d:
                    terms.append((layout.trfp[(c, d)], share))
                inst.add_con(terms, "=", 0, conservation_tag[p])
                if cuts:
                    # a used pair's route indicators form one unit path
                    iterms = [(layout.route[(p, c, d, *l)][1], 1) for l in out_links[e]]
                    iterms += [(layout.route[(p, c, d, *l)][1], -1) for l in in_links[e]]
                    if e == c:
                        iterms.append((used, -1))
                    elif e == d:
                        iterms.append((used, 1))
                    inst.add_con(iterms, "=", 0, "aux", name=f"cut_path_p{p}_{pname}_n{nidx[e]}")
                if out_links[e]:
                    inst.add_con(
                        [(layout.route[(p, c, d, *l)][1], 1) for l in out_links[e]], "<=", 1, nosplit_tag[p]
                    )
        if scheme.dual:
            for e, f in links:
                inst.add_con(
                    [(layout.route[(1, c, d, e, f)][1], 1), (layout.route[(2, c, d, e, f)][1], 1)],
                    "<=",
                    1,
                    "27",
                )
            if cuts and scheme.traffic_mode in ("RPTR", "STR"):
                # both routes carry the same flow at the same cost: order them
                # by the index of their first hop
                terms = [(layout.route[(1, c, d, c, f)][1], nidx[f]) for _, f in out_links[c]]
                terms += [(layout.route[(2, c, d, c, f)][1], -nidx[f]) for _, f in out_links[c]]
                inst.add_con(terms, "<=", 0, "aux", name=f"cut_sym_{pname}")

    trfl = {}
    for p in paths:
        for e, f in links:
            v = inst.add_var(f"TRFL{p}_e{nidx[e]}_f{nidx[f]}", "continuous")
            trfl[(p, (e, f))] = v
            inst.add_con(link_flow_terms[(p, (e, f))] + [(v, -1)], "=", 0, link_tag[p])

    # --- network module activation (28)-(29): send or receive on any route ----
    tm = {}
    for e in nodes:
        tm[e] = inst.add_var(f"TM_n{nidx[e]}", "binary")
        terms = []
        for c, d in pairs:
            for p in paths:
                for l in out_links[e] + in_links[e]:
                    terms.append((layout.route[(p, c, d, *l)][1], 1))
        inst.add_con(terms + [(tm[e], -1)], ">=", 0, "28")
        m29 = max(len(terms), 1) if big_m is None else inst.big_m
        inst.add_con(terms + [(tm[e], -m29)], "<=", 0, "29")
        if cuts:
            # a simple route enters and leaves a node at most once
            for c, d in pairs:
                for p in paths:
                    for side, group in (("out", out_links[e]), ("in", in_links[e])):
                        if group:
                            inst.add_con(
                                [(tm[e], 1)] + [(layout.route[(p, c, d, *l)][1], -1) for l in group],
                                ">=",
                                0,
                                "aux",
                                name=f"cut_tm_{side}_n{nidx[e]}_p{p}_n{nidx[c]}_n{nidx[d]}",
                            )

    # --- arrivals, capacity and latency (30)-(34) ----------------------------
    # each virtual link lands on one host pair and each route enters a node once
    max_arrival = sum(positive) * share * len(paths)
    levels = []
    for lam, w in table.levels:
        levels.append((lam, w))
        if lam >= max_arrival:
            break
    layout.levels = levels
    wvars = {}
    for f in nodes:
        n = network.node(f)
        trfn = inst.add_var(f"TRFN_n{nidx[f]}", "continuous")
        inst.add_con([(trfl[(p, l)], 1) for p in paths for l in in_links[f]] + [(trfn, -1)], "=", 0, "30")
        inst.add_con([(trfn, 1)], "<=", n.traffic_capacity, "31")
        li = [inst.add_var(f"LI_n{nidx[f]}_j{j}", "binary") for j in range(len(levels))]
        # ceiling form of the level equality: smallest level at or above the rate
        inst.add_con([(v, lam) for v, (lam, _) in zip(li, levels)] + [(trfn, -1)], ">=", 0, "32")
        inst.add_con([(v, 1) for v in li], "<=", 1, "33")
        if cuts and in_links[f]:
            for c, d in pairs:
                for p in paths:
                    inst.add_con(
                        [(v, 1) for v in li] + [(layout.route[(p, c, d, *l)][1], -1) for l in in_links[f]],
                        ">=",
                        0,
                        "aux",
                        name=f"cut_li_n{nidx[f]}_p{p}_n{nidx[c]}_n{nidx[d]}",
                    )
        wvars[f] = inst.add_var(f"W_n{nidx[f]}", "continuous")
        inst.add_con([(v, w) for v, (_, w) in zip(li, levels)] + [(wvars[f], -1)], "=", 0, "34")

    # --- objective -------------------------------------------------------------
    tl = inst.add_var("TL", "continuous")
    tpp = inst.add_var("TPP", "continuous")
    tnp = inst.add_var("TNP", "continuous")
    inst.add_con([(wvars[f], 1) for f in nodes] + [(tl, -1)], "=", 0, "aux", name="def_TL")
    terms = [(pm[c], network.node(c).idle_cpu_power) for c in nodes]
    for _, _, v in vlist:
        for c in nodes:
            n = network.node(c)
            terms.append((layout.ne[(v.key, c)], n.max_cpu_power * v.mcu_demand / n.mcu_capacity))
    inst.add_con(terms + [(tpp, -1)], "=", 0, "aux", name="def_TPP")
    terms = [(tm[e], network.node(e).idle_net_power) for e in nodes]
    for p in paths:
        scale = scheme.secondary_energy_scale if p == 2 else 1.0
        for l in links:
            terms.append((trfl[(p, l)], scale * link_power_per_kbps(network.link(*l))))
    inst.add_con(terms + [(tnp, -1)], "=", 0, "aux", name="def_TNP")
    inst.objective = {tl: weights.alpha, tpp: weights.beta, tnp: weights.gamma}

    problems = inst.validate()
    if problems:
        raise RuntimeError("malformed instance: " + "; ".join(problems[:5]))
    return inst
