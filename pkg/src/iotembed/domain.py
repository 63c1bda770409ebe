"""Physical and virtual layer data model, validation and topology generation."""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

logger = logging.getLogger(__name__)

NodeId = int | str
VNODE_KINDS = ("sensor", "actuator", "controller", "storage", "other")


# ---------------------------------------------------------------------------
# Unit conversions (ingestion only; everything is mW per kb/s internally)
# ---------------------------------------------------------------------------

def nj_per_bit_to_mw_per_kbps(value: float) -> float:
    # 1 nJ/bit at 1 kb/s = 1e-9 J * 1e3 /s = 1e-6 W = 1e-3 mW
    converted = value * 1e-3
    logger.debug("energy per bit %.6g nJ/bit -> %.6g mW/(kb/s)", value, converted)
    return converted


def pj_per_bit_m2_to_mw_per_kbps_m2(value: float) -> float:
    converted = value * 1e-6
    logger.debug("amplifier %.6g pJ/bit/m2 -> %.6g mW/(kb/s)/m2", value, converted)
    return converted


# ---------------------------------------------------------------------------
# Physical layer
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class McuProfile:
    name: str
    clock_mhz: float
    idle_mw: float
    max_mw: float
    ram_kb: float


# Clock/idle/max from the processor table; RAM sizes are datasheet values of
# representative parts and only matter for the RAM capacity constraint.
MCU_PROFILES = (
    McuProfile("MSP430F1", 8.0, 1.0, 8.0, 2.0),
    McuProfile("MSP430FR5", 16.0, 1.0, 14.0, 2.0),
    McuProfile("MSP430FR6", 16.0, 1.0, 20.0, 2.0),
    McuProfile("MSP430F5", 25.0, 1.0, 14.0, 8.0),
    McuProfile("MSP432P4", 48.0, 1.0, 16.0, 64.0),
)


@dataclass(frozen=True)
class IoTNode:
    id: NodeId
    position: tuple[float, float]
    zone: str
    functions: frozenset[str]
    mcu_capacity: float
    ram_capacity: float
    idle_cpu_power: float
    max_cpu_power: float
    idle_net_power: float
    traffic_capacity: float


@dataclass(frozen=True)
class IoTLink:
    """One orientation of a wireless link; networks hold both orientations."""

    endpoints: tuple[NodeId, NodeId]
    distance: float
    energy_per_bit: float
    amplifier_factor: float

    @property
    def reversed(self) -> IoTLink:
        a, b = self.endpoints
        return IoTLink((b, a), self.distance, self.energy_per_bit, self.amplifier_factor)


@dataclass(frozen=True)
class PhysicalNetwork:
    nodes: tuple[IoTNode, ...]
    links: tuple[IoTLink, ...]
    area: tuple[float, float]
    max_link_distance: float
    _node_index: dict = field(init=False, repr=False, compare=False)
    _link_index: dict = field(init=False, repr=False, compare=False)
    _adjacency: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        node_index = {n.id: n for n in self.nodes}
        link_index = {l.endpoints: l for l in self.links}
        adjacency: dict = {n.id: set() for n in self.nodes}
        for a, b in link_index:
            adjacency.setdefault(a, set()).add(b)
        object.__setattr__(self, "_node_index", node_index)
        object.__setattr__(self, "_link_index", link_index)
        object.__setattr__(self, "_adjacency", {k: frozenset(v) for k, v in adjacency.items()})

    @property
    def node_ids(self) -> list[NodeId]:
        return sorted(self._node_index)

    def node(self, node_id: NodeId) -> IoTNode:
        try:
            return self._node_index[node_id]
        except KeyError:
            raise KeyError(f"unknown node {node_id!r}") from None

    def has_node(self, node_id: NodeId) -> bool:
        return node_id in self._node_index

    def link(self, a: NodeId, b: NodeId) -> IoTLink:
        try:
            return self._link_index[(a, b)]
        except KeyError:
            raise KeyError(f"no link {a!r}->{b!r}") from None

    def has_link(self, a: NodeId, b: NodeId) -> bool:
        return (a, b) in self._link_index

    def directed_links(self) -> list[tuple[NodeId, NodeId]]:
        """All directed links in canonical (lexicographic) order."""
        return sorted(self._link_index)


def neighbors(network: PhysicalNetwork, node: NodeId) -> frozenset:
    """Link-adjacent nodes of ``node``.

    Raises KeyError for an unknown node. A node without links yields an
    empty set.
    """
    if not network.has_node(node):
        raise KeyError(f"unknown node {node!r}")
    return network._adjacency.get(node, frozenset())


def is_connected(network: PhysicalNetwork) -> bool:
    ids = network.node_ids
    if not ids:
        return True
    seen = {ids[0]}
    queue = deque([ids[0]])
    while queue:
        u = queue.popleft()
        for v in neighbors(network, u):
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return len(seen) == len(ids)


# ---------------------------------------------------------------------------
# Virtual layer
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VirtualNode:
    bp: str
    id: str
    required_function: str
    required_zone: Optional[str]  # None = any zone
    mcu_demand: float
    ram_demand: float
    kind: str = "other"

    @property
    def key(self) -> tuple[str, str]:
        return (self.bp, self.id)


@dataclass(frozen=True)
class VirtualLink:
    bp: str
    endpoints: tuple[str, str]
    traffic_demand: float


@dataclass(frozen=True)
class BusinessProcess:
    id: str
    vnodes: tuple[VirtualNode, ...]
    vlinks: tuple[VirtualLink, ...]

    def vnode(self, vid: str) -> VirtualNode:
        for v in self.vnodes:
            if v.id == vid:
                return v
        raise KeyError(f"no virtual node {vid!r} in BP {self.id!r}")

    @property
    def neighbor_sets(self) -> dict[str, frozenset[str]]:
        """VN_ia: virtual nodes sharing a virtual link with each vnode."""
        out: dict[str, set] = {v.id: set() for v in self.vnodes}
        for l in self.vlinks:
            a, b = l.endpoints
            out.setdefault(a, set()).add(b)
            out.setdefault(b, set()).add(a)
        return {k: frozenset(v) for k, v in out.items()}


@dataclass(frozen=True)
class ServiceRequest:
    bps: tuple[BusinessProcess, ...] = ()

    def vnodes(self) -> list[VirtualNode]:
        return [v for bp in self.bps for v in bp.vnodes]

    def vlinks(self) -> list[VirtualLink]:
        return [l for bp in self.bps for l in bp.vlinks]

    def vnode(self, bp: str, vid: str) -> VirtualNode:
        for p in self.bps:
            if p.id == bp:
                return p.vnode(vid)
        raise KeyError(f"no BP {bp!r}")


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    path: str
    message: str

    def __str__(self):
        return f"{self.path}: {self.message}"


def validate_scenario(network: PhysicalNetwork, request: ServiceRequest) -> list[Violation]:
    """Check every type invariant; an empty list means the scenario is valid."""
    out: list[Violation] = []

    def bad(path, msg):
        out.append(Violation(path, msg))

    w, h = network.area
    if not (w > 0 and h > 0):
        bad("network.area", f"area dimensions must be positive, got {network.area}")
    if not network.max_link_distance > 0:
        bad("network.max_link_distance", "must be positive")

    seen_ids = set()
    id_types = set()
    for n in network.nodes:
        p = f"network.nodes[{n.id!r}]"
        if n.id in seen_ids:
            bad(p, "duplicate node id")
        seen_ids.add(n.id)
        id_types.add(type(n.id))
        for attr in ("mcu_capacity", "ram_capacity", "traffic_capacity"):
            if not getattr(n, attr) > 0:
                bad(f"{p}.{attr}", f"must be > 0, got {getattr(n, attr)}")
        for attr in ("idle_cpu_power", "max_cpu_power", "idle_net_power"):
            if getattr(n, attr) < 0:
                bad(f"{p}.{attr}", "must be >= 0")
        if n.idle_cpu_power > n.max_cpu_power:
            bad(p, f"idle_cpu_power {n.idle_cpu_power} exceeds max_cpu_power {n.max_cpu_power}")
        x, y = n.position
        if not (0 <= x <= w and 0 <= y <= h):
            bad(f"{p}.position", f"{n.position} outside area {network.area}")
    if len(id_types) > 1:
        bad("network.nodes", "node ids must all be of one type")

    link_keys = set()
    for l in network.links:
        a, b = l.endpoints
        p = f"network.links[{a!r}->{b!r}]"
        if l.endpoints in link_keys:
            bad(p, "duplicate link")
        link_keys.add(l.endpoints)
        if a == b:
            bad(p, "self-loop")
        if a not in seen_ids or b not in seen_ids:
            bad(p, "endpoint references unknown node")
            continue
        if l.distance < 0:
            bad(f"{p}.distance", "must be >= 0")
        if l.distance > network.max_link_distance:
            bad(f"{p}.distance", f"{l.distance} exceeds max_link_distance {network.max_link_distance}")
        if l.energy_per_bit < 0 or l.amplifier_factor < 0:
            bad(p, "energy coefficients must be >= 0")
        pa, pb = network.node(a).position, network.node(b).position
        geo = math.hypot(pa[0] - pb[0], pa[1] - pb[1])
        if not math.isclose(l.distance, geo, rel_tol=1e-9, abs_tol=1e-9):
            bad(f"{p}.distance", f"{l.distance} differs from Euclidean distance {geo}")
        if not network.has_link(b, a):
            bad(p, "reverse orientation missing")
        else:
            r = network.link(b, a)
            if (r.distance, r.energy_per_bit, r.amplifier_factor) != (
                l.distance, l.energy_per_bit, l.amplifier_factor
            ):
                bad(p, "reverse orientation has different attributes")

    bp_ids = set()
    for bp in request.bps:
        p = f"services.bps[{bp.id!r}]"
        if bp.id in bp_ids:
            bad(p, "duplicate BP id")
        bp_ids.add(bp.id)
        vids = set()
        for v in bp.vnodes:
            vp = f"{p}.vnodes[{v.id!r}]"
            if v.id in vids:
                bad(vp, "duplicate virtual node id")
            vids.add(v.id)
            if v.bp != bp.id:
                bad(vp, f"belongs to BP {v.bp!r}")
            if v.mcu_demand < 0:
                bad(f"{vp}.mcu_demand", "must be >= 0")
            if v.ram_demand < 0:
                bad(f"{vp}.ram_demand", "must be >= 0")
            if v.kind not in VNODE_KINDS:
                bad(f"{vp}.kind", f"unknown kind {v.kind!r}")
        pairs = set()
        for l in bp.vlinks:
            a, b = l.endpoints
            lp = f"{p}.vlinks[{a!r}->{b!r}]"
            if l.bp != bp.id:
                bad(lp, f"belongs to BP {l.bp!r}")
            if a == b:
                bad(lp, "endpoints must be distinct")
            for end in (a, b):
                if end not in vids:
                    bad(lp, f"dangling reference to virtual node {end!r}")
            if l.traffic_demand < 0:
                bad(f"{lp}.traffic_demand", "must be >= 0")
            if (a, b) in pairs:
                bad(lp, "duplicate virtual link")
            pairs.add((a, b))
    return out


# ---------------------------------------------------------------------------
# Random topology generation
# ---------------------------------------------------------------------------

class DisconnectedTopologyError(ValueError):
    """No connected draw was found; try another seed or a denser setting."""


@dataclass(frozen=True)
class TopologyDefaults:
    profiles: tuple[McuProfile, ...] = MCU_PROFILES
    idle_net_power: float = 1.0  # mW
    traffic_capacity: float = 250.0  # kb/s
    energy_per_bit_nj: float = 50.0  # nJ/bit
    amplifier_pj: float = 255.0  # pJ/bit/m^2
    zone_grid: tuple[int, int] = (2, 2)
    function_probs: tuple[tuple[str, float], ...] = (
        ("sense", 0.6),
        ("actuate", 0.5),
        ("store", 0.3),
    )
    always_functions: frozenset[str] = frozenset({"process"})


def _zone_of(pos, area, grid) -> str:
    gx, gy = grid
    cx = min(int(pos[0] / area[0] * gx), gx - 1)
    cy = min(int(pos[1] / area[1] * gy), gy - 1)
    return f"Z{cy * gx + cx}"


def build_network(
    positions: Iterable[tuple[float, float]],
    area: tuple[float, float],
    max_link_distance: float,
    functions: Optional[list[frozenset]] = None,
    defaults: TopologyDefaults = TopologyDefaults(),
) -> PhysicalNetwork:
    """Nodes at ``positions`` (ids 0..n-1), linked whenever within range."""
    positions = [(float(x), float(y)) for x, y in positions]
    e_pb = nj_per_bit_to_mw_per_kbps(defaults.energy_per_bit_nj)
    amp = pj_per_bit_m2_to_mw_per_kbps_m2(defaults.amplifier_pj)
    nodes = []
    for i, pos in enumerate(positions):
        prof = defaults.profiles[i % len(defaults.profiles)]
        funcs = functions[i] if functions is not None else frozenset(defaults.always_functions)
        nodes.append(
            IoTNode(
                id=i,
                position=pos,
                zone=_zone_of(pos, area, defaults.zone_grid),
                functions=frozenset(funcs),
                mcu_capacity=prof.clock_mhz,
                ram_capacity=prof.ram_kb,
                idle_cpu_power=prof.idle_mw,
                max_cpu_power=prof.max_mw,
                idle_net_power=defaults.idle_net_power,
                traffic_capacity=defaults.traffic_capacity,
            )
        )
    links = []
    for i in range(len(positions)):
        for j in range(i + 1, len(positions)):
            (xi, yi), (xj, yj) = positions[i], positions[j]
            d = math.hypot(xi - xj, yi - yj)
            if d <= max_link_distance:
                link = IoTLink((i, j), d, e_pb, amp)
                links.extend((link, link.reversed))
    links.sort(key=lambda l: l.endpoints)
    return PhysicalNetwork(tuple(nodes), tuple(links), (float(area[0]), float(area[1])), float(max_link_distance))


def generate_topology(
    seed: int,
    n_nodes: int = 30,
    area: tuple[float, float] = (500.0, 500.0),
    max_link_distance: float = 100.0,
    defaults: TopologyDefaults = TopologyDefaults(),
    max_attempts: int = 5000,
    positions: Optional[list[tuple[float, float]]] = None,
) -> PhysicalNetwork:
    """Seeded unit-disk topology with nodes placed uniformly in ``area``.

    Draws come from numpy's PCG64 generator seeded with ``seed``. A draw that
    is not connected is rejected and the next draw from the same stream is
    tried, up to ``max_attempts`` draws; links are never added artificially.
    Explicit ``positions`` bypass placement (a single deterministic draw).
    """
    if n_nodes < 2:
        raise ValueError(f"n_nodes must be >= 2, got {n_nodes}")
    if not (area[0] > 0 and area[1] > 0):
        raise ValueError(f"area dimensions must be positive, got {area}")
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    rng = np.random.default_rng(seed)
    attempts = 1 if positions is not None else max_attempts
    for attempt in range(attempts):
        if positions is not None:
            pos = [tuple(p) for p in positions]
            if len(pos) != n_nodes:
                raise ValueError("len(positions) must equal n_nodes")
        else:
            pos = rng.uniform((0.0, 0.0), area, size=(n_nodes, 2)).tolist()
        funcs = []
        for _ in range(n_nodes):
            draws = rng.random(len(defaults.function_probs))
            f = set(defaults.always_functions)
            f.update(name for (name, p), u in zip(defaults.function_probs, draws) if u < p)
            funcs.append(frozenset(f))
        net = build_network(pos, area, max_link_distance, funcs, defaults)
        if is_connected(net):
            if attempt:
                logger.debug("seed %s: connected draw after %d rejections", seed, attempt)
            return net
    raise DisconnectedTopologyError(
        f"no connected network in {attempts} draw(s) for seed={seed}, n={n_nodes}, "
        f"area={area}, max_link_distance={max_link_distance}; try a new seed"
    )


def generate_request(
    seed: int,
    network: PhysicalNetwork,
    n_bps: int = 3,
    demand_range: tuple[int, int] = (4, 20),
    with_actuator: bool = True,
) -> ServiceRequest:
    """Seeded request of sensor -> controller (-> actuator) business processes.

    Sensors and actuators are pinned to the zone of a node that offers the
    needed function; controllers may sit in any zone. Demands are integer
    kb/s drawn from ``demand_range``.
    """
    rng = np.random.default_rng(seed)
    ids = network.node_ids

    def zone_for(func):
        hosts = [i for i in ids if func in network.node(i).functions]
        if not hosts:
            return None, None
        n = network.node(hosts[int(rng.integers(len(hosts)))])
        return func, n.zone

    bps = []
    lo, hi = demand_range
    for k in range(n_bps):
        bp = f"bp{k}"
        vnodes = []
        vlinks = []
        func, zone = zone_for("sense")
        s = VirtualNode(bp, "s", func or "process", zone, float(rng.integers(1, 4)), 0.25, "sensor")
        c = VirtualNode(bp, "c", "process", None, float(rng.integers(2, 6)), 0.5, "controller")
        vnodes += [s, c]
        vlinks.append(VirtualLink(bp, ("s", "c"), float(rng.integers(lo, hi + 1))))
        if with_actuator:
            func, zone = zone_for("actuate")
            a = VirtualNode(bp, "a", func or "process", zone, float(rng.integers(1, 4)), 0.25, "actuator")
            vnodes.append(a)
            vlinks.append(VirtualLink(bp, ("c", "a"), float(rng.integers(lo, hi + 1))))
        bps.append(BusinessProcess(bp, tuple(vnodes), tuple(vlinks)))
    return ServiceRequest(tuple(bps))
