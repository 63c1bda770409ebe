"""Node-level resilience transforms and traffic-mode parameters."""

from __future__ import annotations

from dataclasses import dataclass, replace

from .domain import BusinessProcess, ServiceRequest, VirtualLink, VirtualNode

NODE_LEVELS = ("CCNR", "PRNR", "FRNR")
TRAFFIC_MODES = ("single", "RDTR", "RPTR", "STR")
_MODE_ALIASES = {
    "single": "single",
    "single-retransmit": "single",
    "retransmit": "single",
    "rdtr": "RDTR",
    "rptr": "RPTR",
    "str": "STR",
}
REPLICA_SUFFIX = "#2"


class UnknownSchemeError(ValueError):
    pass


@dataclass(frozen=True)
class SchemeSpec:
    node_level: str = "CCNR"
    traffic_mode: str = "single"
    keep_alive_fraction: float = 0.01
    coexistence: bool = True

    def __post_init__(self):
        if self.node_level not in NODE_LEVELS:
            raise UnknownSchemeError(f"unknown node level {self.node_level!r}")
        if self.traffic_mode not in TRAFFIC_MODES:
            raise UnknownSchemeError(f"unknown traffic mode {self.traffic_mode!r}")
        if not 0 <= self.keep_alive_fraction < 1:
            raise ValueError("keep_alive_fraction must lie in [0, 1)")

    @property
    def name(self) -> str:
        return f"{self.node_level}+{self.traffic_mode}"

    @property
    def dual(self) -> bool:
        return self.traffic_mode != "single"

    @property
    def path_share(self) -> float:
        """Fraction of a commodity's demand carried by each route."""
        return 0.5 if self.traffic_mode == "STR" else 1.0

    @property
    def secondary_energy_scale(self) -> float:
        """Multiplier on secondary-route traffic in the network power term.

        The RDTR backup only carries keep-alive traffic while the primary works;
        its full demand is still reserved for capacity and queueing purposes.
        """
        return self.keep_alive_fraction if self.traffic_mode == "RDTR" else 1.0

    def with_mode(self, mode: str) -> SchemeSpec:
        return replace(self, traffic_mode=mode)


# The six schemes of the study: three node levels on a single path and the
# three traffic modes on top of the coexistence baseline.
CANONICAL_SCHEMES = {
    "CCNR": SchemeSpec("CCNR", "single"),
    "PRNR": SchemeSpec("PRNR", "single"),
    "FRNR": SchemeSpec("FRNR", "single"),
    "RDTR": SchemeSpec("CCNR", "RDTR"),
    "RPTR": SchemeSpec("CCNR", "RPTR"),
    "STR": SchemeSpec("CCNR", "STR"),
}


def parse_scheme(text: str, keep_alive_fraction: float = 0.01, coexistence: bool = True) -> SchemeSpec:
    """Parse ``"FRNR+STR"``, ``"PRNR"``, ``"RDTR"`` and similar names."""
    level, mode = "CCNR", "single"
    tokens = [t.strip() for t in text.split("+") if t.strip()]
    if not tokens or len(tokens) > 2:
        raise UnknownSchemeError(f"cannot parse scheme {text!r}")
    seen_level = seen_mode = False
    for tok in tokens:
        if tok.upper() in NODE_LEVELS and not seen_level:
            level, seen_level = tok.upper(), True
        elif tok.lower() in _MODE_ALIASES and not seen_mode:
            mode, seen_mode = _MODE_ALIASES[tok.lower()], True
        else:
            raise UnknownSchemeError(f"cannot parse scheme {text!r}")
    return SchemeSpec(level, mode, keep_alive_fraction, coexistence)


def _duplicate(bp: BusinessProcess, selector) -> BusinessProcess:
    vnodes = list(bp.vnodes)
    links = list(bp.vlinks)
    for v in bp.vnodes:
        if not selector(v):
            continue
        rid = v.id + REPLICA_SUFFIX
        vnodes.append(replace(v, id=rid))
        for l in list(links):
            a, b = l.endpoints
            if a == v.id:
                links.append(VirtualLink(bp.id, (rid, b), l.traffic_demand))
            elif b == v.id:
                links.append(VirtualLink(bp.id, (a, rid), l.traffic_demand))
    return BusinessProcess(bp.id, tuple(vnodes), tuple(links))


def apply_node_scheme(request: ServiceRequest, level: str) -> ServiceRequest:
    """Expand a request for a node-resilience level.

    PRNR duplicates sensors and actuators, FRNR every virtual node. A replica
    copies the requirements of its original, joins the same BP (so the
    coexistence constraint keeps it off its original's host) and receives a
    copy of every virtual link incident to the original at that point, links
    added by earlier duplications included.
    """
    if level == "CCNR":
        return request
    if level == "PRNR":
        selector = lambda v: v.kind in ("sensor", "actuator")  # noqa: E731
    elif level == "FRNR":
        selector = lambda v: True  # noqa: E731
    else:
        raise UnknownSchemeError(f"unknown node level {level!r}")
    return ServiceRequest(tuple(_duplicate(bp, selector) for bp in request.bps))
