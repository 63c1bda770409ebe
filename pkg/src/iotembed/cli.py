"""Command line front end.

    iotembed generate  --seed 7 --out scen.json
    iotembed solve     --scenario scen.json --scheme FRNR+STR --solver exact --out run/
    iotembed check     --scenario scen.json --solution run/solution.json
    iotembed simulate  --scenario scen.json --solution run/solution.json --sweep-pdr 0.5,0.7,0.9,1
    iotembed emit-lp   --scenario scen.json --scheme RPTR --out model.lp

Exit codes: 0 success, 1 check failure, 2 usage or input error,
3 infeasible, 4 limits exceeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

from .cost_model import LatencyTable, ObjectiveWeights, build_latency_table
from .domain import DisconnectedTopologyError, TopologyDefaults, generate_request, generate_topology, validate_scenario
from .heuristic import HeuristicConfig, HeuristicError, embed_greedy
from .milp import (
    InfeasibleError,
    LimitExceededError,
    SolveLimits,
    check_solution,
    compile_instance,
    emit_lp,
    solve_exact,
)
from .resilience import evaluate_failure, evaluate_no_failure, pdr_crossover, pdr_sweep
from .scenario_io import ScenarioFormatError, dumps, load_scenario, save_scenario, scenario_to_dict
from .schemes import UnknownSchemeError, parse_scheme
from .solution import solution_from_dict

log = logging.getLogger("iotembed")

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_LIMIT = 0, 1, 2, 3, 4
COST_HEADER = ["scenario_id", "scheme", "TL_ms", "TPP_mW", "TNP_mW", "objective"]


class UsageError(Exception):
    pass


def _weights(args) -> ObjectiveWeights:
    try:
        return ObjectiveWeights(args.alpha, args.beta, args.gamma)
    except ValueError as e:
        raise UsageError(str(e)) from e


def _scheme(args, text=None):
    try:
        ka = 0.01 if args.keep_alive is None else args.keep_alive
        return parse_scheme(text or args.scheme, ka, not args.no_coexistence)
    except (UnknownSchemeError, ValueError) as e:
        raise UsageError(str(e)) from e


def _load(path):
    if not Path(path).is_file():
        raise UsageError(f"no such file: {path}")
    try:
        net, req, table = load_scenario(path)
    except ScenarioFormatError as e:
        raise UsageError(str(e)) from e
    problems = validate_scenario(net, req)
    if problems:
        raise UsageError("invalid scenario:\n  " + "\n  ".join(map(str, problems)))
    return net, req, table or build_latency_table()


def _read_json(path):
    if not Path(path).is_file():
        raise UsageError(f"no such file: {path}")
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise UsageError(f"{path}: not valid JSON ({e})") from e


def _node_id(text: str):
    text = text.strip()
    return int(text) if text.lstrip("-").isdigit() else text


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------

def cmd_generate(args) -> int:
    if args.n < 2:
        raise UsageError(f"--n must be >= 2, got {args.n}")
    try:
        net = generate_topology(
            args.seed, args.n, tuple(args.area), args.maxdist, TopologyDefaults(zone_grid=tuple(args.zone_grid))
        )
    except (DisconnectedTopologyError, ValueError) as e:
        raise UsageError(str(e)) from e
    req = generate_request(args.seed, net, n_bps=args.bps, with_actuator=not args.no_actuator)
    if args.out:
        save_scenario(args.out, net, req)
    else:
        sys.stdout.write(dumps(scenario_to_dict(net, req)))
    log.info("scenario: %d nodes, %d directed links, %d BPs", len(net.nodes), len(net.links), len(req.bps))
    return EXIT_OK


def cmd_solve(args) -> int:
    net, req, table = _load(args.scenario)
    scheme = _scheme(args)
    weights = _weights(args)
    if args.solver == "exact":
        inst = compile_instance(net, req, scheme, weights, table)
        try:
            sol = solve_exact(inst, SolveLimits(args.time_limit, args.node_limit), threads=args.threads)
        except InfeasibleError as e:
            print(f"infeasible: {e}", file=sys.stderr)
            return EXIT_INFEASIBLE
        except LimitExceededError as e:
            print(f"limit exceeded: {e}", file=sys.stderr)
            return EXIT_LIMIT
    else:
        cfg = HeuristicConfig(args.k_paths, args.budget, args.seed)
        try:
            sol = embed_greedy(net, req, scheme, weights, table, cfg)
        except HeuristicError as e:
            hint = " (27)" if scheme.dual and "disjoint" in str(e) else ""
            print(f"infeasible{hint}: {e}", file=sys.stderr)
            return EXIT_INFEASIBLE
    report = check_solution(net, req, scheme, sol, weights, table)
    c = sol.costs
    print(f"scheme {scheme.name}  TL {c.TL:.6f} ms  TPP {c.TPP:.6f} mW  TNP {c.TNP:.6f} mW  objective {c.objective:.6f}")
    if sol.optimal is False and args.solver == "exact":
        print("warning: limit reached, solution not proven optimal", file=sys.stderr)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "solution.json").write_text(dumps(sol.to_dict(report.to_dict())))
        row = [Path(args.scenario).stem, scheme.name, c.TL, c.TPP, c.TNP, c.objective]
        (out / "costs.csv").write_text(_csv_text(COST_HEADER, [row]))
    if not report.all_pass:
        print(report.summary(), file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def cmd_check(args) -> int:
    net, req, table = _load(args.scenario)
    doc = _read_json(args.solution)
    try:
        scheme = _scheme(args, args.scheme or doc["scheme"])
        sol = solution_from_dict(doc, net)
    except (KeyError, TypeError) as e:
        raise UsageError(f"malformed solution file: {e}") from e
    report = check_solution(net, req, scheme, sol, _weights(args), table)
    print(report.summary())
    if args.out:
        Path(args.out).write_text(dumps(report.to_dict()))
    return EXIT_OK if report.all_pass else EXIT_CHECK


def cmd_simulate(args) -> int:
    net, req, table = _load(args.scenario)
    doc = _read_json(args.solution)
    try:
        sol = solution_from_dict(doc, net)
    except (KeyError, TypeError) as e:
        raise UsageError(f"malformed solution file: {e}") from e
    ka = args.keep_alive
    try:
        if args.sweep_pdr:
            ps = [float(p) for p in args.sweep_pdr.split(",") if p.strip()]
            rows = pdr_sweep(sol, ps, net, ka)
            _emit(_csv_text(["p", "E_RDTR", "E_STR"], rows), args.out)
            p_star = pdr_crossover(sol, net, ka)
            print(f"crossover p = {p_star}" if p_star is not None else "no crossover in (0, 1]", file=sys.stderr)
            return EXIT_OK
        mode = args.mode or sol.scheme.traffic_mode
        if args.failed_link:
            parts = args.failed_link.split(",")
            if len(parts) != 2:
                raise UsageError("--failed-link takes 'a,b'")
            link = (_node_id(parts[0]), _node_id(parts[1]))
            res = evaluate_failure(sol, mode, net, link, args.failure_fraction, ka, table)
        else:
            link = None
            res = evaluate_no_failure(sol, mode, net, ka, table)
    except (ValueError, KeyError) as e:
        raise UsageError(str(e)) from e
    row = [
        mode,
        "" if link is None else f"{link[0]}->{link[1]}",
        args.failure_fraction if link else "",
        res.energy,
        res.delivery_time,
        res.delivered_fraction,
        sum(res.resend.values()),
    ]
    header = ["mode", "failed_link", "failure_fraction", "energy_mW", "delivery_time_ms", "delivered_fraction", "resend_kbps"]
    _emit(_csv_text(header, [row]), args.out)
    for note in res.notes:
        print(f"note: {note}", file=sys.stderr)
    return EXIT_OK


def cmd_emit_lp(args) -> int:
    net, req, table = _load(args.scenario)
    scheme = _scheme(args)
    inst = compile_instance(net, req, scheme, _weights(args), table, big_m=args.big_m)
    _emit(emit_lp(inst, title=f"{Path(args.scenario).stem} {scheme.name}"), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------

def _common(p, scheme=True, weights=True):
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    if scheme:
        p.add_argument("--scheme", default=None if scheme == "optional" else "CCNR", help='e.g. "FRNR+STR", "RDTR"')
    p.add_argument("--keep-alive", type=float, default=None, help="RDTR keep-alive fraction (default 0.01)")
    p.add_argument("--no-coexistence", action="store_true", help="allow one node to host two vnodes of a BP")
    if weights:
        p.add_argument("--alpha", type=float, default=30.0, help="latency weight (1/ms)")
        p.add_argument("--beta", type=float, default=1.0, help="processing power weight (1/mW)")
        p.add_argument("--gamma", type=float, default=1.0, help="network power weight (1/mW)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="iotembed", description="Resilient service embedding in IoT networks")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a seeded random scenario")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=30, help="number of physical nodes")
    p.add_argument("--area", type=float, nargs=2, default=(500.0, 500.0), metavar=("W", "H"))
    p.add_argument("--maxdist", type=float, default=100.0, help="maximum link distance (m)")
    p.add_argument("--zone-grid", type=int, nargs=2, default=(2, 2), metavar=("GX", "GY"))
    p.add_argument("--bps", type=int, default=3, help="business processes in the request")
    p.add_argument("--no-actuator", action="store_true")
    p.add_argument("--out", help="output file (stdout if omitted)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="embed a scenario")
    _common(p)
    p.add_argument("--solver", choices=("exact", "heuristic"), default="exact")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--time-limit", type=float, default=None, help="seconds")
    p.add_argument("--node-limit", type=int, default=None)
    p.add_argument("--k-paths", type=int, default=4, help="heuristic candidate paths")
    p.add_argument("--budget", type=int, default=60, help="heuristic local search evaluations")
    p.add_argument("--out", help="output directory for solution.json and costs.csv")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("check", help="verify a solution file")
    _common(p, scheme="optional")
    p.add_argument("--solution", required=True)
    p.add_argument("--out", help="write the report as JSON")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("simulate", help="energy under failures or a PDR sweep")
    _common(p, scheme=False, weights=False)
    p.add_argument("--solution", required=True)
    p.add_argument("--mode", choices=("single", "RDTR", "RPTR", "STR"))
    p.add_argument("--failed-link", help="directed link 'a,b'")
    p.add_argument("--failure-fraction", type=float, default=0.0)
    p.add_argument("--sweep-pdr", help="comma separated PDR values")
    p.add_argument("--out", help="CSV output (stdout if omitted)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("emit-lp", help="write the model in LP format")
    _common(p)
    p.add_argument("--big-m", type=float, default=None, help="one global big-M instead of per-row constants")
    p.add_argument("--out", help="LP file (stdout if omitted)")
    p.set_defaults(func=cmd_emit_lp)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
