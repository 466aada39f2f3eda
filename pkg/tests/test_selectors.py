import math
from types import SimpleNamespace

import pytest

from mipbb.engine import BnbNode, Limits, solve
from mipbb.selectors import (DFS, BestEstimate, OpenNodeSet, RestartDFS, best_estimate_score, make_selector)
from oracles import random_binary_mip, toy_model


def node(i, depth=0, bound=0.0, estimate=0.0, left=False, prio=False, score=None):
    return BnbNode(i, None, depth, {}, bound, is_left_child=left, is_prio_child=prio, estimate=estimate,
                   policy_score=score)


def tree_with(*nodes, last=()):
    open_ = OpenNodeSet()
    for n in nodes:
        open_.add(n)
    return SimpleNamespace(open=open_, last_children=tuple(last))


def test_dfs_singleton_and_lifo():
    assert DFS().select(tree_with(node(0))) == 0
    t = tree_with(node(1, 1, left=True), node(2, 1))
    assert DFS().select(t) == 2


def test_dfs_backtracks_to_deepest():
    t = tree_with(node(1, 1), node(3, 3), node(5, 2))
    assert DFS().select(t) == 3


def test_restart_dfs_counter():
    sel = RestartDFS(3)
    t = tree_with(node(1, 2, bound=5.0), node(2, 1, bound=3.0))
    assert [sel.select(t) for _ in range(3)] == [1, 1, 2]
    always = RestartDFS(1)
    assert always.select(t) == 2 and always.select(t) == 2
    with pytest.raises(ValueError):
        RestartDFS(0)


def test_best_estimate_score():
    assert best_estimate_score(4.0, [], [], []) == 4.0
    assert best_estimate_score(5.0, [0.3], [2.0], [1.0]) == pytest.approx(5.6)
    assert best_estimate_score(0.0, [0.5, 0.5], [1, 1], [1, 1]) == pytest.approx(1.0)


def test_best_estimate_plunges_to_priority_child():
    sel = BestEstimate(abort_cap=14)
    sel.plunge.length = 3
    t = tree_with(node(7, 1, estimate=0.0), node(1, 4, estimate=9.0, left=True), node(2, 4, estimate=8.0, prio=True),
                  last=(1, 2))
    assert sel.select(t) == 2
    assert sel.plunge.length == 4


def test_best_estimate_aborts_at_cap():
    sel = BestEstimate(abort_cap=2)
    sel.plunge.length = 2
    t = tree_with(node(7, 1, estimate=0.5), node(1, 3, estimate=9.0, left=True), node(2, 3, estimate=8.0),
                  last=(1, 2))
    assert sel.select(t) == 7
    assert sel.plunge.aborts == 1 and sel.plunge.length == 0


def test_best_estimate_after_leaf_takes_min_estimate():
    sel = BestEstimate()
    t = tree_with(node(3, 2, estimate=4.0), node(4, 2, estimate=2.0), last=())
    assert sel.select(t) == 4 and sel.plunge.aborts == 0


def test_infinite_cap_is_pure_plunging():
    model = random_binary_mip(__import__("numpy").random.default_rng(11), 12, 5)
    sel = BestEstimate(abort_cap=math.inf)
    result = solve(model, sel, limits=Limits(stop_at_first_plunge=True))
    assert sel.plunge.aborts == 0
    assert result.first_plunge_depth == result.first_leaf_depth


def test_make_selector():
    assert isinstance(make_selector("DFS"), DFS)
    assert make_selector("restartdfs", restart_every=5).restart_every == 5
    with pytest.raises(ValueError):
        make_selector("nope")


def test_score_ordering_prefers_high_scores():
    t = tree_with(node(3, score=0.8), node(7, score=0.6), node(9))
    assert t.open.best("score") == 3


def test_toy_processing_order_under_best_estimate():
    result = solve(toy_model(), BestEstimate())
    processed = [e["id"] for e in result.event_log if e["reason"] != "policy"]
    assert processed[:3] == [0, 1, 4]
