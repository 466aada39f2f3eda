import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mipbb.lp import (DenseSimplex, InvalidNodeError, LpProblem, apply_overrides, solve_lp,
                      solve_lp_with_overrides)
from oracles import random_lp, vertex_enumeration


def test_single_variable_bound_row():
    sol = solve_lp(LpProblem([1.0], [([1.0], ">=", 3.0)], [(0.0, 10.0)]))
    assert sol.status == "optimal"
    assert sol.values[0] == pytest.approx(3.0)
    assert sol.objective_value == pytest.approx(3.0)


def test_contradictory_rows_are_infeasible():
    lp = LpProblem([0.0], [([1.0], ">=", 1.0), ([1.0], "<=", 0.0)], [(-math.inf, math.inf)])
    assert solve_lp(lp).status == "infeasible"


def test_unbounded_is_reported():
    lp = LpProblem([-1.0, 0.0], [([1.0, -1.0], "<=", 1.0)])
    assert solve_lp(lp).status == "unbounded"


def test_equality_and_maximize():
    lp = LpProblem([3.0, 2.0], [([1.0, 1.0], "=", 4.0), ([1.0, 3.0], "<=", 6.0)], [(0, 3), (0, 5)], "maximize")
    sol = solve_lp(lp)
    assert sol.objective_value == pytest.approx(11.0)
    np.testing.assert_allclose(sol.values, [3.0, 1.0], atol=1e-9)


def test_bad_input_is_rejected():
    with pytest.raises(ValueError):
        LpProblem([1.0, 2.0], [([1.0], "<=", 1.0)])
    with pytest.raises(ValueError):
        LpProblem([1.0], [([1.0], "<", 1.0)])
    with pytest.raises(ValueError):
        LpProblem([1.0], var_bounds=[(2.0, 1.0)])


@pytest.mark.parametrize("seed", range(60))
def test_matches_vertex_enumeration(seed):
    rng = np.random.default_rng(seed)
    lp = random_lp(rng, int(rng.integers(1, 7)), int(rng.integers(1, 7)))
    expected = vertex_enumeration(lp)
    sol = solve_lp(lp)
    if expected is None:
        assert sol.status == "infeasible"
    else:
        assert sol.status == "optimal"
        assert sol.objective_value == pytest.approx(expected, abs=1e-6)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_solution_is_feasible_and_consistent(seed):
    rng = np.random.default_rng(seed)
    lp = random_lp(rng, 4, 4)
    sol = solve_lp(lp)
    if sol.status != "optimal":
        return
    x = sol.values
    lo, hi = lp.bounds_arrays()
    assert np.all(x >= lo - 1e-7) and np.all(x <= hi + 1e-7)
    for coefs, rel, rhs in lp.rows:
        a = float(np.dot(coefs, x))
        if rel == "<=":
            assert a <= rhs + 1e-7
        elif rel == ">=":
            assert a >= rhs - 1e-7
        else:
            assert a == pytest.approx(rhs, abs=1e-7)
    assert sol.objective_value == pytest.approx(float(np.dot(lp.objective, x)), abs=1e-9)


def test_warm_start_matches_cold_solve():
    rng = np.random.default_rng(7)
    for _ in range(40):
        lp = random_lp(rng, 5, 4)
        solver = DenseSimplex(lp)
        parent = solver.solve()
        if not parent.is_optimal:
            continue
        lo, hi = lp.bounds_arrays()
        j = int(rng.integers(lp.num_vars))
        hi2 = hi.copy()
        hi2[j] = math.floor((lo[j] + hi[j]) / 2)
        warm = solver.solve(lo, hi2, warm=parent.basis)
        cold = DenseSimplex(lp).solve(lo, hi2)
        assert warm.status == cold.status
        if cold.is_optimal:
            assert warm.objective_value == pytest.approx(cold.objective_value, abs=1e-7)


def test_override_fixing_matches_fixed_problem():
    lp = LpProblem([-1.0, -2.0], [([1.0, 1.0], "<=", 1.5)], [(0, 1), (0, 1)])
    fixed = LpProblem([-1.0, -2.0], [([1.0, 1.0], "<=", 1.5)], [(0, 0), (0, 1)])
    a = solve_lp_with_overrides(lp, {0: (0.0, 0.0)})
    b = solve_lp(fixed)
    assert a.objective_value == pytest.approx(b.objective_value)
    np.testing.assert_allclose(a.values, b.values)


def test_empty_override_is_identity():
    lp = LpProblem([-1.0, -2.0], [([1.0, 1.0], "<=", 1.5)], [(0, 1), (0, 1)])
    assert solve_lp_with_overrides(lp, {}).objective_value == pytest.approx(solve_lp(lp).objective_value)


def test_contradictory_override_is_invalid_node():
    lp = LpProblem([1.0], var_bounds=[(0, 1)])
    with pytest.raises(InvalidNodeError):
        apply_overrides(lp, {0: (1.0, 0.0)})
    with pytest.raises(InvalidNodeError):
        apply_overrides(lp, {0: (-1.0, 1.0)})
