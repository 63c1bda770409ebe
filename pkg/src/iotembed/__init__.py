"""Resilient service embedding for IoT networks: exact MILP, heuristic, evaluators."""

from .cost_model import (
    CapacityExceededError,
    CostBreakdown,
    LatencyTable,
    ObjectiveWeights,
    build_latency_table,
    link_power_per_kbps,
    network_power,
    node_latency,
    processing_power,
    total_objective,
)
from .domain import (
    BusinessProcess,
    IoTLink,
    IoTNode,
    PhysicalNetwork,
    ServiceRequest,
    VirtualLink,
    VirtualNode,
    generate_request,
    generate_topology,
    validate_scenario,
)
from .heuristic import HeuristicConfig, embed_greedy, local_search, route_paths
from .milp import check_solution, compile_instance, emit_lp, solve_exact
from .resilience import (
    DeliveryOutcome,
    elru_baseline,
    evaluate_failure,
    evaluate_no_failure,
    pdr_crossover,
    pdr_sweep,
)
from .schemes import CANONICAL_SCHEMES, SchemeSpec, apply_node_scheme, parse_scheme
from .solution import EmbeddingSolution

__version__ = "0.1.0"
