import csv
import io
import json

import pytest

from iotembed.cli import main
from iotembed.resilience import pdr_crossover
from iotembed.scenario_io import load_scenario, save_scenario
from iotembed.solution import solution_from_dict

from _oracles import tiny_scenario
from conftest import chain_request, make_net

# exhaustive-search optimum of tiny_scenario(1), default weights and table
TINY1_OPT = {"CCNR+single": 138.75234993840874, "CCNR+RDTR": 273.4783043600974}


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def tiny1(tmp_path):
    path = tmp_path / "tiny1.json"
    save_scenario(path, *tiny_scenario(1))
    return path


@pytest.fixture
def diamond(tmp_path):
    path = tmp_path / "diamond.json"
    net = make_net([(10.0, 40.0), (50.0, 70.0), (50.0, 9.0), (90.0, 40.0)], maxdist=55.0)
    save_scenario(path, net, chain_request((10.0,)))
    return path


def solved(capsys, scenario, tmp_path, scheme, *extra):
    out = tmp_path / f"out-{scheme}"
    code, _, err = run(capsys, "solve", "--scenario", scenario, "--scheme", scheme, "--out", out, *extra)
    assert code == 0, err
    return out


class TestGenerate:
    def test_default_is_valid(self, capsys, tmp_path):
        p = tmp_path / "g.json"
        assert run(capsys, "generate", "--seed", 4, "--out", p)[0] == 0
        doc = json.loads(p.read_text())
        assert len(doc["network"]["nodes"]) == 30
        assert len(doc["services"]["bps"]) == 3

    def test_same_seed_same_bytes(self, capsys):
        a = run(capsys, "generate", "--seed", 9, "--n", 8)[1]
        b = run(capsys, "generate", "--seed", 9, "--n", 8)[1]
        c = run(capsys, "generate", "--seed", 10, "--n", 8)[1]
        assert a == b != c

    def test_too_few_nodes(self, capsys):
        assert run(capsys, "generate", "--n", 1)[0] == 2


class TestSolve:
    @pytest.mark.parametrize("scheme", sorted(TINY1_OPT))
    def test_exact_matches_reference(self, capsys, tiny1, tmp_path, scheme):
        out = solved(capsys, tiny1, tmp_path, scheme)
        rows = list(csv.DictReader(io.StringIO((out / "costs.csv").read_text())))
        assert list(rows[0]) == ["scenario_id", "scheme", "TL_ms", "TPP_mW", "TNP_mW", "objective"]
        assert rows[0]["scenario_id"] == "tiny1"
        assert float(rows[0]["objective"]) == pytest.approx(TINY1_OPT[scheme], rel=1e-6)
        doc = json.loads((out / "solution.json").read_text())
        assert doc["scheme"] == scheme

    def test_heuristic_not_below_optimum(self, capsys, tiny1, tmp_path):
        out = solved(capsys, tiny1, tmp_path, "CCNR", "--solver", "heuristic", "--budget", 10)
        row = next(csv.DictReader(io.StringIO((out / "costs.csv").read_text())))
        assert float(row["objective"]) >= TINY1_OPT["CCNR+single"] - 1e-6

    @pytest.mark.parametrize("solver", ["exact", "heuristic"])
    def test_rptr_on_a_tree(self, capsys, tmp_path, solver):
        path = tmp_path / "line.json"
        net = make_net([(10.0, 10.0), (60.0, 10.0), (110.0, 10.0)], maxdist=60.0, area=(120.0, 20.0))
        save_scenario(path, net, chain_request((10.0,)))
        code, _, err = run(capsys, "solve", "--scenario", path, "--scheme", "RPTR", "--solver", solver)
        assert code == 3
        assert "27" in err

    def test_bad_scheme(self, capsys, tiny1):
        assert run(capsys, "solve", "--scenario", tiny1, "--scheme", "XYZ")[0] == 2

    def test_missing_scenario(self, capsys, tmp_path):
        assert run(capsys, "solve", "--scenario", tmp_path / "nope.json")[0] == 2


class TestCheck:
    def test_round_trip_passes(self, capsys, tiny1, tmp_path):
        out = solved(capsys, tiny1, tmp_path, "CCNR+RDTR")
        code, text, _ = run(capsys, "check", "--scenario", tiny1, "--solution", out / "solution.json")
        assert code == 0, text

    def test_tampered_names_family(self, capsys, diamond, tmp_path):
        out = solved(capsys, diamond, tmp_path, "RPTR")
        doc = json.loads((out / "solution.json").read_text())
        c = doc["commodities"][0]
        c["route2"] = c["route1"]  # no longer link-disjoint
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(doc))
        code, text, _ = run(capsys, "check", "--scenario", diamond, "--solution", bad)
        assert code == 1
        assert "27" in text

    def test_missing_solution(self, capsys, tiny1, tmp_path):
        assert run(capsys, "check", "--scenario", tiny1, "--solution", tmp_path / "none.json")[0] == 2


class TestSimulate:
    def test_sweep(self, capsys, diamond, tmp_path):
        out = solved(capsys, diamond, tmp_path, "RDTR")
        code, text, err = run(
            capsys, "simulate", "--scenario", diamond, "--solution", out / "solution.json", "--sweep-pdr", "0.5,1.0"
        )
        assert code == 0
        rows = list(csv.DictReader(io.StringIO(text)))
        assert [float(r["p"]) for r in rows] == [0.5, 1.0]
        assert float(rows[0]["E_RDTR"]) > float(rows[1]["E_RDTR"])
        sol = solution_from_dict(json.loads((out / "solution.json").read_text()), load_scenario(diamond)[0])
        assert f"crossover p = {pdr_crossover(sol, load_scenario(diamond)[0])}" in err

    def test_failure_off_route(self, capsys, diamond, tmp_path):
        out = solved(capsys, diamond, tmp_path, "STR")
        sol = out / "solution.json"
        base = run(capsys, "simulate", "--scenario", diamond, "--solution", sol)[1]
        code, text, err = run(
            capsys, "simulate", "--scenario", diamond, "--solution", sol, "--failed-link", "3,1", "--failure-fraction", "0.5"
        )
        assert code == 0
        e0 = float(next(csv.DictReader(io.StringIO(base)))["energy_mW"])
        row = next(csv.DictReader(io.StringIO(text)))
        assert float(row["energy_mW"]) == pytest.approx(e0)
        assert row["failed_link"] == "3->1"
        assert "detection" in err

    def test_bad_link(self, capsys, diamond, tmp_path):
        out = solved(capsys, diamond, tmp_path, "STR")
        code = run(capsys, "simulate", "--scenario", diamond, "--solution", out / "solution.json", "--failed-link", "0")[0]
        assert code == 2


class TestEmitLp:
    def test_idempotent(self, capsys, tiny1, tmp_path):
        a, b = tmp_path / "a.lp", tmp_path / "b.lp"
        for p in (a, b):
            assert run(capsys, "emit-lp", "--scenario", tiny1, "--scheme", "CCNR+STR", "--out", p)[0] == 0
        assert a.read_bytes() == b.read_bytes()
        assert "Minimize" in a.read_text() or "minimize" in a.read_text().lower()

    def test_bad_scheme(self, capsys, tiny1):
        assert run(capsys, "emit-lp", "--scenario", tiny1, "--scheme", "FOO+BAR")[0] == 2
