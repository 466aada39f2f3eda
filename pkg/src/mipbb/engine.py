"""Branch and bound over the dense simplex.

The search follows the textbook loop: poll a node, skip it if its inherited
bound cannot beat the incumbent, solve its relaxation, prune by bound or
infeasibility, record integral solutions and otherwise split on the most
fractional integer variable. Everything is kept in minimization sense
internally; results are reported in the model's own sense.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .lp import (
    BASIC,
    Basis,
    DenseSimplex,
    LpError,
    LpProblem,
    LpSolution,
    apply_overrides,
)
from .selectors import OpenNodeSet

log = logging.getLogger(__name__)

INT_TOL = 1e-6
OBJ_EPS = 1e-9
PSEUDOCOST_INIT = 1.0
INFERENCE_INIT = 1.0

VAR_TYPES = ("binary", "integer", "implied-integer", "continuous")
BRANCHABLE = ("binary", "integer")

DOWN, UP = 0, 1


class MipError(Exception):
    pass


@dataclass
class MipModel:
    lp: LpProblem
    integrality: list[str]
    name: str = ""

    def __post_init__(self):
        if len(self.integrality) != self.lp.num_vars:
            raise ValueError("integrality must list one type per variable")
        bad = sorted(set(self.integrality) - set(VAR_TYPES))
        if bad:
            raise ValueError(f"unknown variable types {bad}")
        if self.num_integer < 1:
            raise ValueError("a MIP needs at least one integer variable")
        for j, t in enumerate(self.integrality):
            lo, hi = self.lp.var_bounds[j]
            if t == "binary" and (lo < 0 or hi > 1):
                raise ValueError(f"binary variable {j} has bounds [{lo}, {hi}] outside [0, 1]")

    @property
    def num_vars(self) -> int:
        return self.lp.num_vars

    @property
    def num_integer(self) -> int:
        return sum(t != "continuous" for t in self.integrality)

    def branchable_mask(self) -> np.ndarray:
        return np.array([t in BRANCHABLE for t in self.integrality])

    def objective_of(self, x) -> float:
        return float(np.dot(self.lp.objective, x))

    def __eq__(self, other):
        if not isinstance(other, MipModel):
            return NotImplemented
        return (self.integrality == other.integrality and self.name == other.name
                and self.lp.sense == other.lp.sense
                and list(self.lp.objective) == list(other.lp.objective)
                and list(self.lp.var_bounds) == list(other.lp.var_bounds)
                and [(list(a), r, b) for a, r, b in self.lp.rows]
                == [(list(a), r, b) for a, r, b in other.lp.rows])


@dataclass
class BnbNode:
    id: int
    parent_id: int | None
    depth: int
    bound_changes: dict
    dual_bound: float
    branched_var: int | None = None
    is_left_child: bool = False
    is_prio_child: bool = False
    estimate: float = -math.inf
    policy_score: float | None = None
    branch_value: float | None = None  # parent LP value of the branched variable
    warm: Basis | None = field(default=None, repr=False)


@dataclass
class SearchBounds:
    primal_bound: float = math.inf
    dual_bound: float = -math.inf
    incumbent: np.ndarray | None = None
    incumbent_history: list = field(default_factory=list)


@dataclass
class BranchDecision:
    var: int
    value: float
    floor: float
    prio: str  # left, right or none
    root_value: float


@dataclass
class Limits:
    time: float | None = None
    nodes: int | None = None
    stop_at_first_leaf: bool = False
    stop_at_first_plunge: bool = False


@dataclass
class SolveResult:
    status: str
    best_objective: float
    incumbent: np.ndarray | None
    nodes_processed: int
    solving_time: float
    final_gap: float
    first_leaf_depth: int | None
    event_log: list
    primal_bound: float = math.inf
    dual_bound: float = -math.inf
    lp_iterations: int = 0
    max_depth: int = 0
    first_plunge_depth: int | None = None
    first_leaf_time: float | None = None
    root_objective: float | None = None
    root_values: np.ndarray | None = None
    pool: list = field(default_factory=list)
    node_failures: int = 0
    policy_pruned: int = 0
    extra: dict = field(default_factory=dict)


# ------------------------------------------------------------------ gaps


def integrality_gap(primal: float, dual: float) -> float:
    if primal == dual:
        return 0.0
    if math.isinf(primal) or math.isinf(dual) or math.isnan(primal) or math.isnan(dual):
        return math.inf
    if primal * dual < 0:
        return math.inf
    denom = min(abs(primal), abs(dual))
    if denom == 0:
        return math.inf
    return abs(primal - dual) / denom


def optimality_gap(found_objective: float, optimal_objective: float) -> float:
    return integrality_gap(found_objective, optimal_objective)


# ------------------------------------------------------- branching rules


def prio_child(inf_left: float, inf_right: float, value: float, root_value: float) -> str:
    p_left = inf_left * (root_value - value + 1)
    p_right = inf_right * (value - root_value + 1)
    if p_left > p_right:
        return "left"
    if p_left < p_right:
        return "right"
    return "none"


def fractionality(values: np.ndarray) -> np.ndarray:
    f = values - np.floor(values)
    return np.minimum(f, 1.0 - f)


def select_branch_var(values: np.ndarray, branchable: np.ndarray) -> int | None:
    """Most fractional integer variable, lowest index on ties; None if integral."""
    frac = np.where(branchable, fractionality(values), 0.0)
    j = int(np.argmax(frac))
    if frac[j] <= INT_TOL:
        return None
    return j


class PseudoCostTable:
    """Running means of objective gain per unit fractionality and of inference counts."""

    def __init__(self, num_vars: int, init: float = PSEUDOCOST_INIT, inference_init: float = INFERENCE_INIT):
        self.init = init
        self.inference_init = inference_init
        self.psi_sum = np.zeros((2, num_vars))
        self.psi_count = np.zeros((2, num_vars), dtype=int)
        self.inf_sum = np.zeros((2, num_vars))
        self.inf_count = np.zeros((2, num_vars), dtype=int)

    def _mean(self, total, count, init):
        return np.where(count > 0, total / np.maximum(count, 1), init)

    def psi(self, direction: int) -> np.ndarray:
        return self._mean(self.psi_sum[direction], self.psi_count[direction], self.init)

    def pseudocost(self, var: int, direction: int) -> float:
        return float(self.psi(direction)[var])

    def inference(self, var: int, direction: int) -> float:
        c = self.inf_count[direction, var]
        return float(self.inf_sum[direction, var] / c) if c else self.inference_init

    def add_pseudocost(self, var: int, direction: int, gain: float, distance: float):
        if distance <= 0:
            return
        self.psi_sum[direction, var] += max(gain, 0.0) / distance
        self.psi_count[direction, var] += 1

    def add_inference(self, var: int, direction: int, count: float):
        self.inf_sum[direction, var] += count
        self.inf_count[direction, var] += 1


@dataclass
class ChildEvent:
    """Outcome of solving a child relaxation, as fed to the statistics."""

    var: int
    direction: int
    parent_objective: float
    child_objective: float | None  # None when the child LP was infeasible
    distance: float
    inferences: int


def update_statistics(pc: PseudoCostTable, events) -> PseudoCostTable:
    if isinstance(events, ChildEvent):
        events = [events]
    for ev in events:
        if ev.child_objective is not None and math.isfinite(ev.parent_objective):
            pc.add_pseudocost(ev.var, ev.direction, ev.child_objective - ev.parent_objective, ev.distance)
        pc.add_inference(ev.var, ev.direction, ev.inferences)
    return pc


def estimate_penalties(values: np.ndarray, branchable: np.ndarray, pc: PseudoCostTable):
    """Per-variable min(psi- f, psi+ (1-f)) over fractional integer variables."""
    f = values - np.floor(values)
    frac = branchable & (np.minimum(f, 1 - f) > INT_TOL)
    down = pc.psi(DOWN) * f
    up = pc.psi(UP) * (1.0 - f)
    penalty = np.where(frac, np.minimum(down, up), 0.0)
    return penalty, down, up


class Propagator:
    """One round of activity-based bound tightening over the rows touching a variable."""

    def __init__(self, model: MipModel):
        lp = model.lp
        rows, rhs = [], []
        if lp.num_rows:
            A = lp.matrix()
            b = lp.rhs()
            for a, rel, r in zip(A, lp.relations(), b):
                if rel in ("<=", "="):
                    rows.append(a)
                    rhs.append(r)
                if rel in (">=", "="):
                    rows.append(-a)
                    rhs.append(-r)
        n = lp.num_vars
        self.G = np.array(rows).reshape(-1, n)
        self.h = np.array(rhs, dtype=float)
        self.var_rows = [np.flatnonzero(self.G[:, j]) for j in range(n)]
        self.integer = np.array([t != "continuous" for t in model.integrality])

    def count(self, var: int, lo: np.ndarray, hi: np.ndarray) -> int:
        rows = self.var_rows[var]
        if rows.size == 0:
            return 0
        G = self.G[rows]
        pos, neg = G > 0, G < 0
        with np.errstate(invalid="ignore", divide="ignore"):
            minc = np.where(pos, G * lo, np.where(neg, G * hi, 0.0))
            finite = ~np.isinf(minc).any(axis=1)
            if not finite.any():
                return 0
            G, pos, neg, minc = G[finite], pos[finite], neg[finite], minc[finite]
            slack = (self.h[rows][finite] - minc.sum(axis=1))[:, None]
            ratio = slack / np.where(G == 0, 1.0, G)
            new_hi = np.where(pos, lo + ratio, math.inf).min(axis=0)
            new_lo = np.where(neg, hi + ratio, -math.inf).max(axis=0)
        new_hi = np.where(self.integer, np.floor(new_hi + INT_TOL), new_hi)
        new_lo = np.where(self.integer, np.ceil(new_lo - INT_TOL), new_lo)
        tightened = (new_hi < hi - INT_TOL) | (new_lo > lo + INT_TOL)
        tightened[var] = False
        return int(tightened.sum())


def branch(node: BnbNode, relaxation: LpSolution, pc: PseudoCostTable, branchable=None,
           root_values=None, next_id: int = 0, objective: float | None = None, base_bounds=None):
    """Split ``node`` on its most fractional variable into (left, right, decision)."""
    x = relaxation.values
    if branchable is None:
        branchable = np.ones(len(x), dtype=bool)
    j = select_branch_var(x, branchable)
    if j is None:
        raise MipError("no fractional integer variable to branch on")
    value = float(x[j])
    fl = math.floor(value)
    root_value = value if root_values is None else float(root_values[j])
    prio = prio_child(pc.inference(j, DOWN), pc.inference(j, UP), value, root_value)
    bound = relaxation.objective_value if objective is None else objective
    base = (-math.inf, math.inf) if base_bounds is None else (base_bounds[0][j], base_bounds[1][j])
    lo_j, hi_j = node.bound_changes.get(j, base)
    children = []
    for k, (is_left, new) in enumerate(((True, (lo_j, min(hi_j, fl))), (False, (max(lo_j, fl + 1), hi_j)))):
        changes = dict(node.bound_changes)
        changes[j] = new
        children.append(BnbNode(
            id=next_id + k,
            parent_id=node.id,
            depth=node.depth + 1,
            bound_changes=changes,
            dual_bound=bound,
            branched_var=j,
            is_left_child=is_left,
            is_prio_child=(prio == "left") == is_left and prio != "none",
            estimate=bound,
            branch_value=value,
            warm=relaxation.basis,
        ))
    return children[0], children[1], BranchDecision(j, value, float(fl), prio, root_value)


# ----------------------------------------------------------------- search


class BranchAndBound:
    """State of one search; selectors and policies read it through attributes."""

    def __init__(self, model: MipModel, selector, pruner=None, limits: Limits | None = None,
                 on_branch=(), pool_size: int | None = None, record_events: bool = True):
        self.model = model
        self.selector = selector
        self.pruner = pruner
        self.limits = limits or Limits()
        self.on_branch = list(on_branch) if not callable(on_branch) else [on_branch]
        self.pool_size = pool_size
        self.record_events = record_events

        lp = model.lp
        self.sign = 1.0 if lp.sense == "minimize" else -1.0
        self.simplex = DenseSimplex(lp)
        self.propagator = Propagator(model)
        self.branchable = model.branchable_mask()
        self.integer = np.array([t != "continuous" for t in model.integrality])
        self.base_lo, self.base_hi = lp.bounds_arrays()
        n = lp.num_vars

        self.pc = PseudoCostTable(n)
        self.open = OpenNodeSet()
        self.bounds = SearchBounds()
        self.last_children: tuple = ()
        self.events: list = []
        self.pool: list = []  # (objective, seq, values) in min sense
        self._pool_seq = 0

        self.root_values: np.ndarray | None = None
        self.root_objective: float | None = None
        self.nodes_processed = 0
        self.lp_count = 0
        self.lp_iterations = 0
        self.node_lp_iterations = 0
        self.max_depth = 0
        self.first_leaf_depth: int | None = None
        self.first_leaf_time: float | None = None
        self.first_plunge_depth: int | None = None
        self.node_failures = 0
        self.policy_pruned = 0
        self.pruned_bound = math.inf
        self.status_prev = np.full(n, -1)
        self.status_changed_at = np.zeros(n)
        self.incumbent_sum = np.zeros(n)
        self._next_id = 0
        self._t0 = 0.0
        self._last_processed: BnbNode | None = None

    # ------------------------------------------------------------ helpers

    def elapsed(self) -> float:
        return time.perf_counter() - self._t0

    def cutoff(self) -> float:
        if self.pool_size:
            if len(self.pool) >= self.pool_size:
                return self.pool[-1][0]
            return math.inf
        return self.bounds.primal_bound

    def global_dual_bound(self, extra: float = math.inf) -> float:
        best = extra
        if len(self.open):
            best = min(best, self.open.get(self.open.best("bound")).dual_bound)
        best = min(best, self.pruned_bound)
        return min(best, self.bounds.primal_bound)

    def node_bounds(self, node: BnbNode):
        return apply_overrides(self.model.lp, node.bound_changes)

    def _log(self, node: BnbNode, action: str, reason: str):
        if self.record_events:
            self.events.append({
                "id": node.id,
                "parent": node.parent_id,
                "depth": node.depth,
                "action": action,
                "reason": reason,
                "bounds": node.bound_changes,
            })

    def _leaf(self, node: BnbNode):
        if self.first_leaf_depth is None:
            self.first_leaf_depth = node.depth
            self.first_leaf_time = self.elapsed()

    def _new_id(self) -> int:
        i = self._next_id
        self._next_id += 1
        return i

    # ----------------------------------------------------------- main loop

    def run(self) -> SolveResult:
        self._t0 = time.perf_counter()
        root = BnbNode(self._new_id(), None, 0, {}, -math.inf)
        self.open.add(root)
        limits = self.limits
        stopped = False
        while len(self.open):
            if limits.nodes is not None and self.nodes_processed >= limits.nodes:
                stopped = True
                break
            if limits.time is not None and self.elapsed() >= limits.time:
                stopped = True
                break
            node_id = self.selector.select(self)
            if self._last_processed is not None and self.first_plunge_depth is None:
                if node_id not in self.last_children:
                    self.first_plunge_depth = self._last_processed.depth
                    if limits.stop_at_first_plunge:
                        stopped = True
                        break
            node = self.open.pop(node_id)
            self.last_children = ()
            self.nodes_processed += 1
            self.max_depth = max(self.max_depth, node.depth)
            self._process(node)
            self._last_processed = node
            if limits.stop_at_first_leaf and self.first_leaf_depth is not None:
                stopped = bool(len(self.open))
                break
        if self.first_plunge_depth is None and self._last_processed is not None:
            self.first_plunge_depth = self._last_processed.depth
        return self._result(stopped)

    def _process(self, node: BnbNode):
        cutoff = self.cutoff()
        if node.dual_bound >= cutoff - OBJ_EPS * max(1.0, abs(cutoff)):
            self._log(node, "discard", "bound-pre")
            self._leaf(node)
            return
        lo, hi = self.node_bounds(node)
        try:
            sol = self.simplex.solve(lo, hi, warm=node.warm)
        except LpError as exc:
            log.warning("node %d: LP failure %s", node.id, exc)
            self.node_failures += 1
            self._log(node, "discard", "lp-error")
            self._leaf(node)
            return
        node.warm = None
        self.lp_count += 1
        self.lp_iterations += sol.iterations
        self.node_lp_iterations = sol.iterations
        obj = self.sign * sol.objective_value if sol.is_optimal else None
        if node.branched_var is not None:
            j = node.branched_var
            direction = DOWN if node.is_left_child else UP
            frac = node.branch_value - math.floor(node.branch_value)
            dist = frac if direction == DOWN else 1.0 - frac
            update_statistics(self.pc, ChildEvent(j, direction, node.dual_bound, obj, dist,
                                                  self.propagator.count(j, lo, hi)))
        if sol.status == "unbounded":
            raise MipError("LP relaxation is unbounded")
        if not sol.is_optimal:
            self._log(node, "discard", "infeasible")
            self._leaf(node)
            return
        changed = sol.status_codes != self.status_prev
        self.status_changed_at[changed] = self.lp_count
        self.status_prev = sol.status_codes
        if node.parent_id is None:
            self.root_values = sol.values.copy()
            self.root_objective = obj

        cutoff = self.cutoff()
        if obj > cutoff + OBJ_EPS * max(1.0, abs(cutoff)):
            self._log(node, "discard", "bound-post")
            self._leaf(node)
            return
        j = select_branch_var(sol.values, self.branchable)
        if j is None:
            self._integral(node, sol)
            self._log(node, "leaf", "integral")
            self._leaf(node)
            return
        self._branch(node, sol, obj)

    def _integral(self, node: BnbNode, sol: LpSolution):
        x = np.where(self.integer, np.round(sol.values), sol.values)
        x = np.clip(x, self.base_lo, self.base_hi)
        obj = self.sign * self.model.objective_of(x)
        if obj < self.bounds.primal_bound - OBJ_EPS:
            self.bounds.primal_bound = obj
            self.bounds.incumbent = x
            self.bounds.incumbent_history.append(x)
            self.incumbent_sum += x
        if self.pool_size:
            self._pool_add(obj, x)

    def _pool_add(self, obj: float, x: np.ndarray):
        key = np.round(x, 9)
        for _, _, other in self.pool:
            if np.array_equal(np.round(other, 9), key):
                return
        if len(self.pool) >= self.pool_size and obj >= self.pool[-1][0]:
            return
        self.pool.append((obj, self._pool_seq, x))
        self._pool_seq += 1
        self.pool.sort(key=lambda t: (t[0], t[1]))
        del self.pool[self.pool_size:]

    def _branch(self, node: BnbNode, sol: LpSolution, obj: float):
        left, right, decision = branch(node, sol, self.pc, self.branchable, self.root_values,
                                       next_id=self._next_id, objective=obj,
                                       base_bounds=(self.base_lo, self.base_hi))
        self._next_id += 2
        penalty, down, up = estimate_penalties(sol.values, self.branchable, self.pc)
        base = obj + penalty.sum() - penalty[decision.var]
        left.estimate = base + down[decision.var]
        right.estimate = base + up[decision.var]

        for hook in self.on_branch:
            hook(self, node, sol, left, right, decision)
        if hasattr(self.selector, "on_branch"):
            self.selector.on_branch(self, node, sol, left, right, decision)
        pruned = set()
        if self.pruner is not None:
            pruned = set(self.pruner.prune(self, node, left, right, decision) or ())
        kept = []
        for child in (left, right):
            if child.id in pruned:
                self.policy_pruned += 1
                self.pruned_bound = min(self.pruned_bound, child.dual_bound)
                self._log(child, "discard", "policy")
            else:
                self.open.add(child)
                kept.append(child.id)
        self.last_children = tuple(kept)
        self._log(node, "branch", "branched")
        if not kept:
            self._leaf(node)

    def _result(self, stopped: bool) -> SolveResult:
        b = self.bounds
        exhausted = not len(self.open) and not stopped
        exact = exhausted and self.policy_pruned == 0 and self.node_failures == 0
        if exact:
            dual = b.primal_bound
            status = "optimal" if b.incumbent is not None else "infeasible"
        else:
            dual = self.global_dual_bound()
            if self.root_objective is None:
                dual = -math.inf
            status = "feasible" if b.incumbent is not None else "limit-reached"
        b.dual_bound = dual
        primal = b.primal_bound
        gap = 0.0 if exact and b.incumbent is not None else integrality_gap(primal, dual)
        if status == "infeasible":
            gap = math.inf
        s = self.sign
        pool = [(s * o, x) for o, _, x in self.pool]
        return SolveResult(
            status=status,
            best_objective=s * primal if b.incumbent is not None else math.nan,
            incumbent=b.incumbent,
            nodes_processed=self.nodes_processed,
            solving_time=self.elapsed(),
            final_gap=gap,
            first_leaf_depth=self.first_leaf_depth,
            event_log=self.events,
            primal_bound=s * primal,
            dual_bound=s * dual,
            lp_iterations=self.lp_iterations,
            max_depth=self.max_depth,
            first_plunge_depth=self.first_plunge_depth,
            first_leaf_time=self.first_leaf_time,
            root_objective=None if self.root_objective is None else s * self.root_objective,
            root_values=self.root_values,
            pool=pool,
            node_failures=self.node_failures,
            policy_pruned=self.policy_pruned,
        )


def solve(model: MipModel, selector, pruner=None, limits: Limits | None = None, **kwargs) -> SolveResult:
    return BranchAndBound(model, selector, pruner, limits, **kwargs).run()


def _jsonable_bounds(bounds: dict):
    return [[int(j), None if math.isinf(lo) else lo, None if math.isinf(hi) else hi]
            for j, (lo, hi) in sorted(bounds.items())]


def write_event_log(events, path) -> Path:
    path = Path(path)
    with path.open("w") as fh:
        for ev in events:
            row = dict(ev, bounds=_jsonable_bounds(ev["bounds"]))
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    return path
