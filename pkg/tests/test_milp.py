from dataclasses import replace
from itertools import product

import highspy
import pytest

from iotembed.domain import BusinessProcess, ServiceRequest, VirtualLink, VirtualNode
from iotembed.milp import (
    InfeasibleError,
    MilpInstance,
    check_solution,
    compile_instance,
    emit_lp,
    solve_exact,
)
from iotembed.schemes import CANONICAL_SCHEMES, SchemeSpec, parse_scheme
from iotembed.solution import route_from_nodes

from _oracles import brute_force, tiny_scenario
from conftest import chain_request, make_net

SINGLE = CANONICAL_SCHEMES["CCNR"]


def two_node():
    return make_net([(10.0, 10.0), (50.0, 10.0)])


def solve(net, req, scheme, weights, table, **kw):
    return solve_exact(compile_instance(net, req, scheme, weights, table, **kw))


class TestCompile:
    def test_two_node_single_path(self, weights, table):
        net, req = two_node(), chain_request((10.0,))
        inst = compile_instance(net, req, SINGLE, weights, table)
        assert inst.validate() == []
        sol = solve_exact(inst)
        assert len(sol.commodities) == 1
        (k, dem), = sol.commodities.items()
        assert dem == 10.0
        assert sol.link_traffic1 == {k: 10.0}

    def test_tags_by_scheme(self, weights, table):
        net, req = two_node(), chain_request()
        single = set(compile_instance(net, req, SINGLE, weights, table).count_by_tag())
        assert {"5", "6", "9", "10", "15", "16", "17", "18", "21", "30", "31", "32", "33", "34"} <= single
        assert not single & {"22", "23", "24", "25", "26", "27", "35", "36"}
        rdtr = set(compile_instance(net, req, CANONICAL_SCHEMES["RDTR"], weights, table).count_by_tag())
        assert {"22", "23", "24", "25", "26", "27"} <= rdtr
        st = set(compile_instance(net, req, CANONICAL_SCHEMES["STR"], weights, table).count_by_tag())
        assert {"35", "36", "27"} <= st and not st & {"17", "22"}

    def test_coexistence_can_be_disabled(self, weights, table):
        net, req = two_node(), chain_request()
        off = SchemeSpec("CCNR", "single", coexistence=False)
        assert "6" not in compile_instance(net, req, off, weights, table).count_by_tag()

    def test_str_source_supply_is_half_demand(self, weights, table):
        inst = compile_instance(two_node(), chain_request(), CANONICAL_SCHEMES["STR"], weights, table)
        coefs = {
            abs(c) for con in inst.constraints if con.tag in ("35", "36")
            for v, c in con.coeffs if v.startswith("TRFP_")
        }
        assert coefs == {0.5}

    def test_linearised_link_embedding_is_and(self, weights, table):
        inst = compile_instance(two_node(), chain_request(), SINGLE, weights, table, cuts=False)
        rows = inst.constraints_with_tag("15")
        assert rows
        for con in rows:
            ne = [v for v, _ in con.coeffs if v.startswith("NE_")]
            le = next(v for v, _ in con.coeffs if v.startswith("LE_"))
            x = next(v for v, _ in con.coeffs if v.startswith("X_"))
            coef = dict(con.coeffs)
            for a, b in product((0, 1), repeat=2):
                ok = {
                    (lv, xv) for lv, xv in product((0, 1), repeat=2)
                    if coef[ne[0]] * a + coef[ne[1]] * b + coef[le] * lv + coef[x] * xv == con.rhs
                }
                assert ok == {(a & b, a ^ b)}

    def test_missing_function_gives_hint(self, weights, table):
        req = chain_request()
        bp = req.bps[0]
        bad = replace(bp, vnodes=(replace(bp.vnodes[0], required_function="teleport"),) + bp.vnodes[1:])
        inst = compile_instance(two_node(), ServiceRequest((bad,)), SINGLE, weights, table)
        assert any("teleport" in h for h in inst.hints)
        with pytest.raises(InfeasibleError, match="teleport"):
            solve_exact(inst)


class TestSolve:
    def test_rptr_without_disjoint_pair_is_infeasible(self, weights, table):
        net, req = two_node(), chain_request()
        assert brute_force(net, req, CANONICAL_SCHEMES["RPTR"], weights, table) is None
        with pytest.raises(InfeasibleError) as err:
            solve(net, req, CANONICAL_SCHEMES["RPTR"], weights, table)
        assert "27" in err.value.families

    def test_triangle_matches_brute_force(self, triangle, weights, table):
        req = chain_request((10.0,))
        sol = solve(triangle, req, SINGLE, weights, table)
        best, asg, routes = brute_force(triangle, req, SINGLE, weights, table)
        assert sol.objective == pytest.approx(best, abs=1e-6)
        (c, d), = sol.commodities
        assert c != d and sol.routes1[(c, d)] == ((c, d),)

    def test_empty_and_zero_demand(self, triangle, weights, table):
        assert solve(triangle, ServiceRequest(), SINGLE, weights, table).objective == 0.0
        sol = solve(triangle, chain_request((0.0,)), SINGLE, weights, table)
        assert sol.costs.TL == 0.0 and sol.costs.TNP == 0.0 and not sol.routes1

    def test_deterministic_and_thread_independent(self, weights, table):
        net, req = tiny_scenario(7)
        inst = compile_instance(net, req, CANONICAL_SCHEMES["STR"], weights, table)
        a, b = solve_exact(inst), solve_exact(inst)
        c = solve_exact(inst, threads=2)
        assert a.canonical_key() == b.canonical_key() == c.canonical_key()
        assert a.objective == b.objective == c.objective

    def test_monolithic_engine_agrees(self, weights, table):
        net, req = tiny_scenario(0)
        for name in ("CCNR", "RDTR", "STR"):
            inst = compile_instance(net, req, CANONICAL_SCHEMES[name], weights, table)
            assert solve_exact(inst, engine="highs").objective == pytest.approx(solve_exact(inst).objective, abs=1e-6)

    def test_literal_big_m_is_safe(self, weights, table):
        net, req = tiny_scenario(0)
        for name in ("CCNR", "RPTR"):
            tight = solve(net, req, CANONICAL_SCHEMES[name], weights, table)
            lit = solve(net, req, CANONICAL_SCHEMES[name], weights, table, big_m=1e8)
            assert lit.objective == pytest.approx(tight.objective, abs=1e-6)
            assert lit.stats["max_route_flow"] < 0.01 * 1e8

    def test_without_cuts_same_optimum(self, weights, table):
        net, req = tiny_scenario(1)
        for name in ("CCNR", "STR"):
            a = solve(net, req, CANONICAL_SCHEMES[name], weights, table)
            b = solve(net, req, CANONICAL_SCHEMES[name], weights, table, cuts=False)
            assert a.objective == pytest.approx(b.objective, abs=1e-6)


class TestLp:
    def test_empty_instance(self):
        text = emit_lp(MilpInstance())
        assert "Minimize\n obj: 0\nSubject To\nBounds\nEnd\n" in text

    def test_tags_as_comments_and_determinism(self, triangle, weights, table):
        inst = compile_instance(triangle, chain_request(), CANONICAL_SCHEMES["RDTR"], weights, table)
        text = emit_lp(inst)
        assert text.count("\\ tag ") == len(inst.constraints)
        assert "\\ tag 27" in text and "\\ tag aux" in text
        again = compile_instance(triangle, chain_request(), CANONICAL_SCHEMES["RDTR"], weights, table)
        assert emit_lp(again) == text

    @pytest.mark.parametrize("seed", [0, 5])
    @pytest.mark.parametrize("name", ["CCNR", "RDTR", "RPTR", "STR"])
    def test_external_solver_agrees(self, name, seed, tmp_path, weights, table):
        net, req = tiny_scenario(seed)
        inst = compile_instance(net, req, CANONICAL_SCHEMES[name], weights, table)
        path = tmp_path / "m.lp"
        path.write_text(emit_lp(inst))
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        assert h.readModel(str(path)) == highspy.HighsStatus.kOk
        assert set(h.getLp().col_names_) == {v.name for v in inst.variables}
        h.run()
        assert h.getInfo().objective_function_value == pytest.approx(solve_exact(inst).objective, abs=1e-6)


# ---------------------------------------------------------------------------
# checker
# ---------------------------------------------------------------------------

@pytest.fixture
def square():
    # 4-cycle with one diagonal: every pair has two link-disjoint routes
    return make_net([(10.0, 10.0), (60.0, 10.0), (60.0, 60.0), (10.0, 60.0)], maxdist=72.0)


def solved(net, name, weights, table, req=None):
    req = req or chain_request((10.0, 8.0), mcu=(2.0, 2.0, 2.0))
    scheme = parse_scheme(name)
    return req, scheme, solve(net, req, scheme, weights, table)


def failed(net, req, scheme, sol, weights=None, table=None):
    return set(check_solution(net, req, scheme, sol, weights, table).failed())


class TestChecker:
    @pytest.mark.parametrize("name", ["CCNR", "PRNR", "RDTR", "RPTR", "STR"])
    def test_solver_output_passes(self, square, name, weights, table):
        req, scheme, sol = solved(square, name, weights, table)
        rep = check_solution(square, req, scheme, sol, weights, table)
        assert rep.all_pass, rep.summary()

    def test_shared_link_under_rdtr(self, square, weights, table):
        req, scheme, sol = solved(square, "RDTR", weights, table)
        k = next(iter(sol.routes1))
        bad = replace(sol, routes2={**sol.routes2, k: sol.routes1[k]})
        rep = check_solution(square, req, scheme, bad)
        assert "27" in rep.failed()
        assert str(sol.routes1[k][0]) in " ".join(rep.families["27"].violations)

    def test_str_flow_not_half(self, square, weights, table):
        req, scheme, sol = solved(square, "STR", weights, table)
        k = next(iter(sol.path_flow1))
        bad = replace(sol, path_flow1={**sol.path_flow1, k: sol.commodities[k]})
        assert "35" in failed(square, req, scheme, bad)

    def test_assignment_tampering(self, square, weights, table):
        req, scheme, sol = solved(square, "CCNR", weights, table)
        keys = sorted(sol.assignment)
        dropped = replace(sol, assignment={k: v for k, v in sol.assignment.items() if k != keys[0]})
        assert "5" in failed(square, req, scheme, dropped)
        shared = replace(sol, assignment={**sol.assignment, keys[1]: sol.assignment[keys[0]]})
        assert {"6", "15-16"} <= failed(square, req, scheme, shared)

    def test_function_zone_and_capacity(self, square, weights, table):
        bp = chain_request((10.0,)).bps[0]
        v0 = replace(bp.vnodes[0], required_function="sense", required_zone="Z9")
        req = ServiceRequest((replace(bp, vnodes=(v0, bp.vnodes[1])),))
        ok_req, scheme, sol = solved(square, "CCNR", weights, table, chain_request((10.0,)))
        fam = failed(square, req, scheme, sol)
        assert {"11-12", "13-14"} <= fam
        heavy = ServiceRequest((replace(bp, vnodes=(replace(bp.vnodes[0], mcu_demand=500.0, ram_demand=500.0), bp.vnodes[1])),))
        assert {"9", "10"} <= failed(square, heavy, scheme, sol)

    def test_route_tampering(self, square, weights, table):
        req, scheme, sol = solved(square, "CCNR", weights, table)
        k = next(iter(sol.routes1))
        c, d = k
        other = next(n for n in square.node_ids if n not in k)
        broken = replace(sol, routes1={**sol.routes1, k: ((c, other),)})
        assert "17" in failed(square, req, scheme, broken)
        loop = replace(sol, routes1={**sol.routes1, k: route_from_nodes([c, other, c, d])})
        assert "21" in failed(square, req, scheme, loop)
        extra = replace(sol, routes2=dict(sol.routes1))
        assert "22" in failed(square, req, scheme, extra)

    def test_traffic_and_capacity_identities(self, square, weights, table):
        req, scheme, sol = solved(square, "CCNR", weights, table)
        e = next(iter(sol.link_traffic1))
        bad = replace(sol, link_traffic1={**sol.link_traffic1, e: sol.link_traffic1[e] + 1.0})
        assert "18" in failed(square, req, scheme, bad)
        n = next(iter(sol.node_arrivals))
        bad = replace(sol, node_arrivals={**sol.node_arrivals, n: sol.node_arrivals[n] + 3.0})
        assert "30" in failed(square, req, scheme, bad)
        big = chain_request((300.0,))
        _, _, s2 = solved(square, "CCNR", weights, table, chain_request((10.0,)))
        k = next(iter(s2.routes1))
        over = replace(s2, commodities={k: 300.0}, path_flow1={k: 300.0})
        assert {"31", "32-34"} <= failed(square, big, scheme, over)

    def test_cost_tampering(self, square, weights, table):
        req, scheme, sol = solved(square, "CCNR", weights, table)
        bad = replace(sol, costs=replace(sol.costs, TL=sol.costs.TL + 1.0))
        assert failed(square, req, scheme, bad, weights, table) == {"costs"}
