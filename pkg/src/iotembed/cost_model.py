"""Processing power, network power, queuing latency and the weighted objective.

Units: kb/s for traffic, mW for power, ms for latency, MHz for MCU load.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional

from .domain import IoTLink, IoTNode, NodeId, PhysicalNetwork, VirtualNode

# Absorbs float noise when comparing a summed arrival rate to a table level.
RATE_EPS = 1e-9


class CapacityExceededError(ValueError):
    pass


@dataclass(frozen=True)
class LatencyTable:
    """Discrete arrival-rate levels with their mean per-node latency."""

    levels: tuple[tuple[float, float], ...]
    capacity: Optional[float] = None
    packet_size: Optional[float] = None

    def __post_init__(self):
        lams = [l for l, _ in self.levels]
        ws = [w for _, w in self.levels]
        if not self.levels:
            raise ValueError("latency table needs at least one level")
        if any(b <= a for a, b in zip(lams, lams[1:])):
            raise ValueError("latency levels must be strictly ascending in arrival rate")
        if any(b <= a for a, b in zip(ws, ws[1:])):
            raise ValueError("latency must strictly increase with arrival rate")
        if lams[0] <= 0:
            raise ValueError("arrival-rate levels must be positive")
        if self.capacity is not None and lams[-1] >= self.capacity:
            raise ValueError("every level must lie below capacity")

    @property
    def rates(self) -> list[float]:
        return [l for l, _ in self.levels]

    @property
    def max_rate(self) -> float:
        return self.levels[-1][0]


@dataclass(frozen=True)
class ObjectiveWeights:
    alpha: float = 30.0  # 1/ms
    beta: float = 1.0  # 1/mW
    gamma: float = 1.0  # 1/mW

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError("objective weights must be non-negative")


@dataclass(frozen=True)
class CostBreakdown:
    TL: float
    TPP: float
    TNP: float
    objective: float

    def as_dict(self) -> dict:
        return {"TL": self.TL, "TPP": self.TPP, "TNP": self.TNP, "objective": self.objective}


def mm1_sojourn_ms(rate_kbps: float, capacity_kbps: float, packet_size_bytes: float) -> float:
    """Mean time in an M/M/1 system, in ms, for a kb/s arrival rate."""
    kbit_per_pkt = packet_size_bytes * 8 / 1000
    mu = capacity_kbps / kbit_per_pkt
    lam = rate_kbps / kbit_per_pkt
    if lam >= mu:
        raise ValueError("unstable queue: arrival rate must be below capacity")
    return 1000.0 / (mu - lam)


def build_latency_table(capacity: float = 250.0, packet_size: float = 128.0, step: float = 5.0) -> LatencyTable:
    """Levels at step, 2*step, ... strictly below ``capacity`` (M/M/1 sojourn)."""
    if not 0 < step < capacity:
        raise ValueError(f"need 0 < step < capacity, got step={step}, capacity={capacity}")
    levels = []
    j = 1
    while j * step < capacity:
        lam = j * step
        levels.append((lam, mm1_sojourn_ms(lam, capacity, packet_size)))
        j += 1
    return LatencyTable(tuple(levels), capacity, packet_size)


def node_latency(table: LatencyTable, arrival_rate: float) -> float:
    """Latency of the smallest level at or above ``arrival_rate``; 0 when idle."""
    if arrival_rate < -RATE_EPS:
        raise ValueError(f"negative arrival rate {arrival_rate}")
    if arrival_rate <= RATE_EPS:
        return 0.0
    if arrival_rate > table.max_rate + RATE_EPS:
        raise CapacityExceededError(
            f"arrival rate {arrival_rate} kb/s exceeds top latency level {table.max_rate} kb/s"
        )
    j = bisect.bisect_left(table.rates, arrival_rate - RATE_EPS)
    return table.levels[j][1]


def processing_power(node: IoTNode, hosted: Iterable[VirtualNode]) -> float:
    hosted = list(hosted)
    if not hosted:
        return 0.0
    load = sum(v.mcu_demand for v in hosted)
    if load > node.mcu_capacity + 1e-9:
        raise CapacityExceededError(
            f"node {node.id!r}: MCU load {load} MHz exceeds capacity {node.mcu_capacity} MHz"
        )
    return node.idle_cpu_power + sum(node.max_cpu_power * (v.mcu_demand / node.mcu_capacity) for v in hosted)


def link_power_per_kbps(link: IoTLink) -> float:
    # electronics term counted for transmitter and receiver, amplifier once
    return 2 * link.energy_per_bit + link.distance ** 2 * link.amplifier_factor


def network_power(
    network: PhysicalNetwork,
    traffic1: Mapping[tuple[NodeId, NodeId], float],
    traffic2: Mapping[tuple[NodeId, NodeId], float] | None = None,
    active: Optional[Iterable[NodeId]] = None,
) -> float:
    """Idle power of active network modules plus traffic-proportional link power.

    By default a node is active when any link incident to it (in either
    direction) carries nonzero traffic in either map. ``active`` overrides
    that set, e.g. to count nodes of a reserved path whose traffic is zero.
    """
    traffic2 = traffic2 or {}
    for key in list(traffic1) + list(traffic2):
        if not network.has_link(*key):
            raise KeyError(f"traffic on nonexistent link {key!r}")
    keys = sorted(set(traffic1) | set(traffic2))
    if active is None:
        on = set()
        for key in keys:
            if traffic1.get(key, 0.0) != 0 or traffic2.get(key, 0.0) != 0:
                on.update(key)
    else:
        on = set(active)
    idle = sum(network.node(n).idle_net_power for n in sorted(on))
    moving = sum(
        (traffic1.get(k, 0.0) + traffic2.get(k, 0.0)) * link_power_per_kbps(network.link(*k)) for k in keys
    )
    return idle + moving


def total_objective(weights: ObjectiveWeights, TL: float, TPP: float, TNP: float) -> CostBreakdown:
    for name, val in (("TL", TL), ("TPP", TPP), ("TNP", TNP)):
        if val < 0 or math.isnan(val):
            raise ValueError(f"{name} must be >= 0, got {val}")
    obj = weights.alpha * TL + weights.beta * TPP + weights.gamma * TNP
    return CostBreakdown(TL, TPP, TNP, obj)
