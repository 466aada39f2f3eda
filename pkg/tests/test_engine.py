import json
import math

import numpy as np
import pytest

from mipbb.engine import (DOWN, UP, BnbNode, ChildEvent, Limits, MipError, MipModel, PseudoCostTable,
                          branch, integrality_gap, optimality_gap, prio_child, select_branch_var, solve,
                          update_statistics, write_event_log)
from mipbb.lp import LpProblem, LpSolution
from mipbb.selectors import BFS, DFS, BestEstimate, RestartDFS
from oracles import brute_force, random_binary_mip, toy_feasible_points, toy_model

SELECTORS = [DFS, BFS, lambda: RestartDFS(3), BestEstimate]


@pytest.mark.parametrize("primal,dual,expected", [(7, 7, 0.0), (-1, 5, math.inf), (10, 8, 0.25),
                                                  (math.inf, 3, math.inf), (0, 0, 0.0)])
def test_integrality_gap(primal, dual, expected):
    assert integrality_gap(primal, dual) == pytest.approx(expected)


def test_optimality_gap():
    assert optimality_gap(10, 10) == 0
    assert optimality_gap(12, 10) == pytest.approx(0.2)
    assert optimality_gap(-3, 4) == math.inf


def test_prio_child_formula():
    assert prio_child(1, 1, 0.7, 0.7) == "none"
    assert prio_child(2, 1, 0.3, 0.5) == "left"
    assert prio_child(0, 1, 0.5, 0.0) == "right"


def test_most_fractional_rule():
    mask = np.ones(2, dtype=bool)
    assert select_branch_var(np.array([0.5, 0.9]), mask) == 0
    assert select_branch_var(np.array([0.4, 0.6]), mask) == 0  # tie goes to the lower index
    assert select_branch_var(np.array([1.0, 0.0]), mask) is None
    assert select_branch_var(np.array([0.5, 0.3]), np.array([False, True])) == 1


def _relaxation(values, obj=0.0):
    return LpSolution("optimal", np.asarray(values, dtype=float), obj)


def test_branch_splits_on_floor():
    root = BnbNode(0, None, 0, {}, -math.inf)
    left, right, d = branch(root, _relaxation([2.4]), PseudoCostTable(1), next_id=1)
    assert left.bound_changes[0][1] == 2 and right.bound_changes[0][0] == 3
    assert (left.id, right.id) == (1, 2) and left.depth == right.depth == 1
    assert d.var == 0 and d.floor == 2


def test_binary_branch_fixes_both_ways():
    root = BnbNode(0, None, 0, {}, -math.inf)
    base = (np.zeros(1), np.ones(1))
    left, right, _ = branch(root, _relaxation([0.5]), PseudoCostTable(1), base_bounds=base)
    assert left.bound_changes[0] == (0.0, 0.0)
    assert right.bound_changes[0] == (1.0, 1.0)


def test_branch_on_integral_point_fails():
    with pytest.raises(MipError):
        branch(BnbNode(0, None, 0, {}, 0.0), _relaxation([1.0]), PseudoCostTable(1))


def test_pseudocost_updates():
    pc = PseudoCostTable(2)
    assert pc.pseudocost(0, DOWN) == pc.pseudocost(0, UP) == 1.0
    update_statistics(pc, ChildEvent(0, DOWN, 1.0, 1.6, 0.3, 2))
    assert pc.pseudocost(0, DOWN) == pytest.approx(2.0)
    pc.add_pseudocost(1, UP, 2.0, 1.0)
    pc.add_pseudocost(1, UP, 4.0, 1.0)
    assert pc.pseudocost(1, UP) == pytest.approx(3.0)
    assert pc.inference(0, DOWN) == 2.0 and pc.inference(0, UP) == 1.0


@pytest.mark.parametrize("make", SELECTORS)
def test_toy_optimum(make):
    result = solve(toy_model(), make())
    best = max(2 * a + 5 * b for a, b in toy_feasible_points())
    assert result.status == "optimal"
    assert result.best_objective == best == 23
    np.testing.assert_allclose(result.incumbent, [4, 3])


def test_root_integral_needs_one_node():
    lp = LpProblem([1.0, 1.0], [([1.0, 1.0], ">=", 2.0)], [(0, 5), (0, 5)])
    result = solve(MipModel(lp, ["integer", "integer"]), DFS())
    assert result.nodes_processed == 1 and result.status == "optimal"
    assert result.first_leaf_depth == 0 and result.final_gap == 0


def test_infeasible_mip():
    lp = LpProblem([1.0], [([2.0], "=", 1.0)], [(0, 3)])
    result = solve(MipModel(lp, ["integer"]), DFS())
    assert result.status == "infeasible" and result.incumbent is None


@pytest.mark.parametrize("seed", range(25))
def test_random_binary_mips_match_brute_force(seed):
    rng = np.random.default_rng(seed)
    model = random_binary_mip(rng, int(rng.integers(2, 11)), int(rng.integers(1, 8)))
    expected = brute_force(model)
    for make in SELECTORS:
        result = solve(model, make())
        if expected is None:
            assert result.status == "infeasible"
        else:
            assert result.status == "optimal"
            assert result.best_objective == pytest.approx(expected, abs=1e-6)


def test_limits_and_status():
    rng = np.random.default_rng(3)
    model = random_binary_mip(rng, 12, 6)
    full = solve(model, DFS())
    if full.nodes_processed > 2:
        capped = solve(model, DFS(), limits=Limits(nodes=2))
        assert capped.nodes_processed == 2
        assert capped.status in ("feasible", "limit-reached")
        sense = 1 if model.lp.sense == "minimize" else -1
        assert sense * capped.dual_bound <= sense * full.best_objective + 1e-9


def test_first_leaf_stop():
    result = solve(toy_model(), DFS(), limits=Limits(stop_at_first_leaf=True))
    assert result.first_leaf_depth is not None
    assert result.nodes_processed == result.first_leaf_depth + 1


def test_event_log(tmp_path):
    result = solve(toy_model(), BestEstimate())
    assert result.event_log[0]["id"] == 0 and result.event_log[-1]["action"] in ("leaf", "discard", "branch")
    ids = {e["id"] for e in result.event_log if e["action"] != "discard" or e["reason"] != "policy"}
    assert len(ids) == result.nodes_processed
    path = write_event_log(result.event_log, tmp_path / "log.jsonl")
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    assert {r["action"] for r in rows} <= {"branch", "leaf", "discard"}
    assert rows[0]["bounds"] == []


def test_pool_is_sorted_distinct_and_feasible():
    # the pool keeps the best solutions the search meets; integral nodes are not enumerated further
    result = solve(toy_model(), BestEstimate(), pool_size=3)
    objs = [o for o, _ in result.pool]
    feasible = set(toy_feasible_points())
    assert objs == sorted(objs, reverse=True) and len(objs) == 3
    assert objs[0] == 23
    assert len({tuple(x) for _, x in result.pool}) == 3
    assert all(tuple(int(v) for v in x) in feasible for _, x in result.pool)
    assert [o for o, _ in result.pool] == [23, 20, 19]


def test_maximize_and_minimize_agree():
    model = toy_model()
    lp = model.lp
    flipped = MipModel(LpProblem([-c for c in lp.objective], lp.rows, lp.var_bounds, "minimize"),
                       model.integrality)
    assert solve(flipped, DFS()).best_objective == -solve(model, DFS()).best_objective


def test_model_validation():
    lp = LpProblem([1.0, 1.0])
    with pytest.raises(ValueError):
        MipModel(lp, ["binary"])
    with pytest.raises(ValueError):
        MipModel(lp, ["binary", "boolean"])
