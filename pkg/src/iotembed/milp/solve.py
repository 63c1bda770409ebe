"""Exact solution of compiled instances and decoding into embeddings."""

from __future__ import annotations

import heapq
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import highspy
import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from ..solution import EmbeddingSolution, build_solution
from .instance import MilpInstance

logger = logging.getLogger(__name__)

INT_TOL = 1e-6
# relative agreement required between the solver objective and the decoded one
DECODE_RTOL = 1e-6

# Constraint families tried, in order, when explaining an infeasible instance.
DIAGNOSTIC_FAMILIES = (
    ("27",),
    ("6",),
    ("31",),
    ("32", "33"),
    ("9",),
    ("10",),
    ("12",),
    ("14",),
)


class InfeasibleError(Exception):
    def __init__(self, message: str, families: tuple = ()):
        super().__init__(message)
        self.families = families


class LimitExceededError(Exception):
    pass


@dataclass(frozen=True)
class SolveLimits:
    time_limit: Optional[float] = None  # seconds
    node_limit: Optional[int] = None


@dataclass
class _RawResult:
    status: str  # optimal | infeasible | limit
    x: Optional[np.ndarray]
    nodes: int = 0


def _solve_highs(inst: MilpInstance, limits: SolveLimits, drop=frozenset()) -> _RawResult:
    c, A, lo, hi, lb, ub, integ = inst.to_arrays(drop)
    options = {"mip_rel_gap": 0.0, "presolve": True}
    if limits.time_limit is not None:
        options["time_limit"] = float(limits.time_limit)
    if limits.node_limit is not None:
        options["node_limit"] = int(limits.node_limit)
    cons = [LinearConstraint(A, lo, hi)] if A.shape[0] else []
    res = milp(c, integrality=integ, bounds=Bounds(lb, ub), constraints=cons, options=options)
    if res.status == 0:
        return _RawResult("optimal", res.x)
    if res.status == 2:
        return _RawResult("infeasible", None)
    if res.status == 1:
        return _RawResult("limit", res.x)
    raise RuntimeError(f"HiGHS failed: {res.message}")


class _LP:
    """LP relaxation of an instance, re-solved under changing column bounds.

    Each thread keeps its own persistent HiGHS model so consecutive solves
    warm-start from the previous basis.
    """

    def __init__(self, inst: MilpInstance, drop=frozenset()):
        c, A, lo, hi, lb, ub, integ = inst.to_arrays(drop)
        self.c, self.lb, self.ub = c, lb, ub
        self.binary = np.flatnonzero(integ)
        self._cols = np.arange(len(c), dtype=np.int32)
        A = A.tocsc()
        lp = highspy.HighsLp()
        lp.num_col_ = len(c)
        lp.num_row_ = A.shape[0]
        lp.col_cost_ = c
        lp.col_lower_ = lb
        lp.col_upper_ = ub
        lp.row_lower_ = np.where(np.isfinite(lo), lo, -highspy.kHighsInf)
        lp.row_upper_ = np.where(np.isfinite(hi), hi, highspy.kHighsInf)
        lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        lp.a_matrix_.start_ = A.indptr
        lp.a_matrix_.index_ = A.indices
        lp.a_matrix_.value_ = A.data
        self._lp = lp
        self._local = threading.local()

    def _model(self):
        h = getattr(self._local, "h", None)
        if h is None:
            h = highspy.Highs()
            h.setOptionValue("output_flag", False)
            h.setOptionValue("threads", 1)
            h.setOptionValue("presolve", "off")
            h.passModel(self._lp)
            self._local.h = h
            self._local.bounds = (self.lb.copy(), self.ub.copy())
        return h

    def solve(self, lb, ub, basis=None):
        """(objective, x, basis) of the relaxation, or Nones when infeasible."""
        h = self._model()
        lb = np.asarray(lb, float)
        ub = np.asarray(ub, float)
        cur_lb, cur_ub = self._local.bounds
        changed = np.flatnonzero((cur_lb != lb) | (cur_ub != ub)).astype(np.int32)
        if len(changed):
            h.changeColsBounds(len(changed), changed, lb[changed], ub[changed])
            self._local.bounds = (lb.copy(), ub.copy())
        if basis is not None:
            h.setBasis(basis)
        h.run()
        status = h.getModelStatus()
        if status == highspy.HighsModelStatus.kOptimal:
            return h.getInfo().objective_function_value, np.array(h.getSolution().col_value), h.getBasis()
        if status == highspy.HighsModelStatus.kInfeasible:
            return None, None, None
        raise RuntimeError(f"LP relaxation failed: {h.modelStatusToString(status)}")


def _host_groups(inst: MilpInstance) -> list[list[int]]:
    """Per virtual node, the indices of its embedding indicators (host order)."""
    lay = inst.context
    if lay is None or not getattr(lay, "ne", None):
        return []
    groups = []
    for v in lay.request.vnodes():
        groups.append([inst.index(lay.ne[(v.key, c)]) for c in lay.network.node_ids])
    return groups


def _is_integral(x, idx) -> bool:
    if len(idx) == 0:
        return True
    xi = x[idx]
    return bool(np.all(np.abs(xi - np.round(xi)) <= INT_TOL))


def _leaf_milp(inst, lb, ub, limits: SolveLimits, drop):
    c, A, lo, hi, _, _, integ = inst.to_arrays(drop)
    options = {"mip_rel_gap": 0.0}
    if limits.time_limit is not None:
        options["time_limit"] = max(float(limits.time_limit), 1e-3)
    cons = [LinearConstraint(A, lo, hi)] if A.shape[0] else []
    res = milp(c, integrality=integ, bounds=Bounds(lb, ub), constraints=cons, options=options)
    if res.status == 0:
        return "optimal", res.fun, res.x
    if res.status == 2:
        return "infeasible", None, None
    if res.status == 1:
        return "limit", (res.fun if res.x is not None else None), res.x
    raise RuntimeError(f"HiGHS failed on a leaf: {res.message}")


def _solve_bnb(inst: MilpInstance, limits: SolveLimits, threads: int = 1, drop=frozenset()) -> _RawResult:
    """Best-bound branch and bound with LP relaxation bounds.

    For compiled embedding instances the search branches on the host of one
    virtual node at a time (declaration order, children in host order), so a
    leaf fixes the whole assignment; the remaining routing problem at a leaf
    is solved exactly by HiGHS. Other instances branch on the first
    fractional binary. Open nodes are ordered by (bound, creation order) and
    an incumbent is replaced only by a strictly better one, so the result
    does not depend on ``threads``, which only parallelises sibling LPs.
    """
    lp = _LP(inst, drop)
    groups = _host_groups(inst)
    start = time.monotonic()

    def remaining():
        if limits.time_limit is None:
            return None
        return limits.time_limit - (time.monotonic() - start)

    root_obj, root_x, root_basis = lp.solve(lp.lb, lp.ub)
    if root_x is None:
        return _RawResult("infeasible", None, 1)
    seq = 0
    # (bound, seq, depth, lb, ub, x, basis)
    heap = [(root_obj, seq, 0, lp.lb.copy(), lp.ub.copy(), root_x, root_basis)]
    best_obj, best_x = np.inf, None
    explored = 1
    hit_limit = False
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None

    def better(obj):
        return obj < best_obj - 1e-9 * max(1.0, abs(best_obj) if np.isfinite(best_obj) else 1.0)

    try:
        while heap:
            left = remaining()
            if (left is not None and left <= 0) or (limits.node_limit is not None and explored >= limits.node_limit):
                hit_limit = True
                break
            bound, _, depth, lb, ub, x, basis = heapq.heappop(heap)
            if not better(bound):
                continue
            if not groups and _is_integral(x, lp.binary):
                best_obj, best_x = bound, x
                continue
            children = []
            if groups and depth < len(groups):
                for j in groups[depth]:
                    if ub[j] < 0.5:
                        continue
                    clb, cub = lb.copy(), ub.copy()
                    cub[groups[depth]] = 0.0
                    clb[j] = cub[j] = 1.0
                    children.append((clb, cub))
            elif groups:
                status, obj, lx = _leaf_milp(inst, lb, ub, SolveLimits(remaining()), drop)
                explored += 1
                if status == "limit":
                    hit_limit = True
                if lx is not None and obj is not None and better(obj):
                    best_obj, best_x = obj, lx
                if status == "limit":
                    break
                continue
            else:
                frac = [j for j in lp.binary if abs(x[j] - np.round(x[j])) > INT_TOL]
                j = frac[0]
                for val in (0.0, 1.0):
                    clb, cub = lb.copy(), ub.copy()
                    clb[j] = cub[j] = val
                    children.append((clb, cub))
            if pool is not None:
                results = list(pool.map(lambda b: lp.solve(*b, basis), children))
            else:
                results = [lp.solve(*b, basis) for b in children]
            for (clb, cub), (obj, cx, cbasis) in zip(children, results):
                explored += 1
                if cx is None or not better(obj):
                    continue
                seq += 1
                heapq.heappush(heap, (round(obj, 9), seq, depth + 1, clb, cub, cx, cbasis))
    finally:
        if pool is not None:
            pool.shutdown()
    if hit_limit:
        return _RawResult("limit", best_x, explored)
    if best_x is None:
        return _RawResult("infeasible", None, explored)
    return _RawResult("optimal", best_x, explored)


def _polish(inst: MilpInstance, x: np.ndarray) -> np.ndarray:
    """Round binaries, fix them, and re-solve the continuous part exactly."""
    lp = _LP(inst)
    lb, ub = lp.lb.copy(), lp.ub.copy()
    rounded = np.round(x[lp.binary])
    lb[lp.binary] = rounded
    ub[lp.binary] = rounded
    _, px, _ = lp.solve(lb, ub)
    if px is None:
        logger.warning("polishing LP infeasible; keeping raw solver values")
        return x
    px[lp.binary] = rounded
    return px


def _run(inst, limits, engine, threads, drop=frozenset()) -> _RawResult:
    if engine == "highs":
        return _solve_highs(inst, limits, drop)
    if engine == "bnb":
        return _solve_bnb(inst, limits, threads, drop)
    raise ValueError(f"unknown engine {engine!r}")


def diagnose_infeasibility(inst: MilpInstance, engine: str = "highs") -> list[str]:
    """Constraint families whose removal alone makes the instance feasible."""
    found = []
    tags_present = set(inst.count_by_tag())
    for fam in DIAGNOSTIC_FAMILIES:
        if not tags_present.intersection(fam):
            continue
        res = _run(inst, SolveLimits(time_limit=30), engine, 1, frozenset(fam))
        if res.status != "infeasible":
            found.append("/".join(fam))
    return found


def decode(inst: MilpInstance, x: np.ndarray) -> EmbeddingSolution:
    """Turn solver values into an EmbeddingSolution with recomputed costs."""
    lay = inst.context
    val = lambda name: x[inst.index(name)]  # noqa: E731
    assignment = {}
    for v in lay.request.vnodes():
        hosts = [c for c in lay.network.node_ids if val(lay.ne[(v.key, c)]) > 0.5]
        if len(hosts) != 1:
            raise RuntimeError(f"decode: vnode {v.key} has hosts {hosts}")
        assignment[v.key] = hosts[0]
    paths = (1, 2) if lay.scheme.dual else (1,)
    routes = {1: {}, 2: {}}
    links = lay.network.directed_links()
    for c, d in lay.pairs:
        if val(lay.trfp[(c, d)]) <= lay.flow_floor / 2:
            continue
        for p in paths:
            nxt = {}
            for e, f in links:
                if val(lay.route[(p, c, d, e, f)][1]) > 0.5:
                    nxt.setdefault(e, []).append(f)
            walk, node, seen = [], c, {c}
            while node != d:
                succ = nxt.get(node)
                if not succ or len(succ) != 1 or succ[0] in seen:
                    raise RuntimeError(f"decode: broken route {p} for commodity {(c, d)}")
                walk.append((node, succ[0]))
                node = succ[0]
                seen.add(node)
            routes[p][(c, d)] = tuple(walk)
    sol = build_solution(
        lay.network, lay.request, lay.scheme, lay.weights, lay.table, assignment, routes[1], routes[2]
    )
    return sol


def solve_exact(
    inst: MilpInstance,
    limits: SolveLimits = SolveLimits(),
    engine: str = "bnb",
    threads: int = 1,
    diagnose: bool = True,
) -> EmbeddingSolution:
    """Solve a compiled instance to proven optimality.

    Raises InfeasibleError (with the constraint families responsible when a
    diagnosis is requested) or LimitExceededError when a limit stops the
    search before any feasible point is found. A limit hit with an incumbent
    returns that incumbent with ``optimal=False``.
    """
    t0 = time.monotonic()
    raw = _run(inst, limits, engine, threads)
    if raw.status == "infeasible":
        families = tuple(diagnose_infeasibility(inst, engine)) if diagnose else ()
        msg = "instance is infeasible"
        if families:
            msg += "; relaxing constraint(s) " + ", ".join(f"({f})" for f in families) + " restores feasibility"
        if inst.hints:
            msg += "; " + "; ".join(inst.hints)
        raise InfeasibleError(msg, families)
    if raw.x is None:
        raise LimitExceededError("search limit reached before a feasible embedding was found")
    x = _polish(inst, raw.x)
    milp_obj = float(inst.objective_value({v.name: x[i] for i, v in enumerate(inst.variables)}))
    sol = decode(inst, x)
    if abs(sol.objective - milp_obj) > DECODE_RTOL * max(1.0, abs(milp_obj)):
        raise RuntimeError(f"decoded objective {sol.objective} disagrees with solver objective {milp_obj}")
    sol.optimal = raw.status == "optimal"
    sol.status = "optimal" if sol.optimal else "limit"
    sol.stats = {
        "engine": engine,
        "milp_objective": milp_obj,
        "bnb_nodes": raw.nodes,
        "seconds": time.monotonic() - t0,
        "max_route_flow": max(
            [x[inst.index(r)] for r, _ in inst.context.route.values()] or [0.0]
        ),
    }
    return sol
