"""Scenario and solution JSON files.

A scenario document has the keys ``network`` and ``services`` and may carry a
``latency_table``. Unknown keys are rejected at every level so that typos do
not silently fall back to defaults.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

from .cost_model import LatencyTable
from .domain import (
    BusinessProcess,
    IoTLink,
    IoTNode,
    PhysicalNetwork,
    ServiceRequest,
    VirtualLink,
    VirtualNode,
)


class ScenarioFormatError(ValueError):
    pass


_NODE_KEYS = {
    "id", "position", "zone", "functions", "mcu_capacity", "ram_capacity",
    "idle_cpu_power", "max_cpu_power", "idle_net_power", "traffic_capacity",
}
_LINK_KEYS = {"endpoints", "distance", "energy_per_bit", "amplifier_factor"}
_VNODE_KEYS = {"id", "required_function", "required_zone", "mcu_demand", "ram_demand", "kind"}


def _keys(doc, required: set, optional: set = frozenset(), where: str = "") -> None:
    if not isinstance(doc, dict):
        raise ScenarioFormatError(f"{where or 'document'}: expected an object")
    extra = set(doc) - required - set(optional)
    missing = required - set(doc)
    if extra:
        raise ScenarioFormatError(f"{where or 'document'}: unknown key(s) {sorted(extra)}")
    if missing:
        raise ScenarioFormatError(f"{where or 'document'}: missing key(s) {sorted(missing)}")


def network_to_dict(net: PhysicalNetwork) -> dict:
    return {
        "area": list(net.area),
        "max_link_distance": net.max_link_distance,
        "nodes": [
            {
                "id": n.id,
                "position": list(n.position),
                "zone": n.zone,
                "functions": sorted(n.functions),
                "mcu_capacity": n.mcu_capacity,
                "ram_capacity": n.ram_capacity,
                "idle_cpu_power": n.idle_cpu_power,
                "max_cpu_power": n.max_cpu_power,
                "idle_net_power": n.idle_net_power,
                "traffic_capacity": n.traffic_capacity,
            }
            for n in net.nodes
        ],
        "links": [
            {
                "endpoints": list(l.endpoints),
                "distance": l.distance,
                "energy_per_bit": l.energy_per_bit,
                "amplifier_factor": l.amplifier_factor,
            }
            for l in net.links
        ],
    }


def network_from_dict(doc: dict) -> PhysicalNetwork:
    _keys(doc, {"area", "max_link_distance", "nodes", "links"}, where="network")
    nodes = []
    for i, n in enumerate(doc["nodes"]):
        _keys(n, _NODE_KEYS, where=f"network.nodes[{i}]")
        nodes.append(
            IoTNode(
                id=n["id"],
                position=tuple(float(x) for x in n["position"]),
                zone=n["zone"],
                functions=frozenset(n["functions"]),
                mcu_capacity=float(n["mcu_capacity"]),
                ram_capacity=float(n["ram_capacity"]),
                idle_cpu_power=float(n["idle_cpu_power"]),
                max_cpu_power=float(n["max_cpu_power"]),
                idle_net_power=float(n["idle_net_power"]),
                traffic_capacity=float(n["traffic_capacity"]),
            )
        )
    links = []
    for i, l in enumerate(doc["links"]):
        _keys(l, _LINK_KEYS, where=f"network.links[{i}]")
        links.append(
            IoTLink(tuple(l["endpoints"]), float(l["distance"]), float(l["energy_per_bit"]), float(l["amplifier_factor"]))
        )
    return PhysicalNetwork(tuple(nodes), tuple(links), tuple(float(a) for a in doc["area"]), float(doc["max_link_distance"]))


def request_to_dict(req: ServiceRequest) -> dict:
    return {
        "bps": [
            {
                "id": bp.id,
                "vnodes": [
                    {
                        "id": v.id,
                        "required_function": v.required_function,
                        "required_zone": v.required_zone,
                        "mcu_demand": v.mcu_demand,
                        "ram_demand": v.ram_demand,
                        "kind": v.kind,
                    }
                    for v in bp.vnodes
                ],
                "vlinks": [{"endpoints": list(l.endpoints), "traffic_demand": l.traffic_demand} for l in bp.vlinks],
            }
            for bp in req.bps
        ]
    }


def request_from_dict(doc: dict) -> ServiceRequest:
    _keys(doc, {"bps"}, where="services")
    bps = []
    for i, b in enumerate(doc["bps"]):
        where = f"services.bps[{i}]"
        _keys(b, {"id", "vnodes", "vlinks"}, where=where)
        vnodes = []
        for j, v in enumerate(b["vnodes"]):
            _keys(v, _VNODE_KEYS - {"kind"}, {"kind"}, where=f"{where}.vnodes[{j}]")
            vnodes.append(
                VirtualNode(
                    b["id"], v["id"], v["required_function"], v["required_zone"],
                    float(v["mcu_demand"]), float(v["ram_demand"]), v.get("kind", "other"),
                )
            )
        vlinks = []
        for j, l in enumerate(b["vlinks"]):
            _keys(l, {"endpoints", "traffic_demand"}, where=f"{where}.vlinks[{j}]")
            vlinks.append(VirtualLink(b["id"], tuple(l["endpoints"]), float(l["traffic_demand"])))
        bps.append(BusinessProcess(b["id"], tuple(vnodes), tuple(vlinks)))
    return ServiceRequest(tuple(bps))


def table_to_dict(table: LatencyTable) -> list:
    return [{"lambda_kbps": lam, "w_ms": w} for lam, w in table.levels]


def table_from_dict(doc: list) -> LatencyTable:
    if not isinstance(doc, list):
        raise ScenarioFormatError("latency_table: expected a list of {lambda_kbps, w_ms}")
    levels = []
    for i, row in enumerate(doc):
        _keys(row, {"lambda_kbps", "w_ms"}, where=f"latency_table[{i}]")
        levels.append((float(row["lambda_kbps"]), float(row["w_ms"])))
    try:
        return LatencyTable(tuple(levels))
    except ValueError as e:
        raise ScenarioFormatError(f"latency_table: {e}") from e


def scenario_to_dict(network: PhysicalNetwork, request: ServiceRequest, table: Optional[LatencyTable] = None) -> dict:
    doc = {"network": network_to_dict(network), "services": request_to_dict(request)}
    if table is not None:
        doc["latency_table"] = table_to_dict(table)
    return doc


def scenario_from_dict(doc: dict):
    """(network, request, latency table or None)."""
    _keys(doc, {"network", "services"}, {"latency_table"})
    table = table_from_dict(doc["latency_table"]) if "latency_table" in doc else None
    try:
        return network_from_dict(doc["network"]), request_from_dict(doc["services"]), table
    except (TypeError, KeyError) as e:
        raise ScenarioFormatError(f"malformed scenario: {e}") from e


def dumps(doc: dict) -> str:
    # sorted keys and a trailing newline: same input, same bytes
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def save_scenario(path, network, request, table=None) -> None:
    Path(path).write_text(dumps(scenario_to_dict(network, request, table)))


def load_scenario(path):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ScenarioFormatError(f"{path}: not valid JSON ({e})") from e
    return scenario_from_dict(doc)
