"""Linear programs and a dense-tableau bounded-variable simplex.

Every row ``a x (<=|>=|=) b`` is turned into ``a x + s = b`` with a ranged
slack ``s``, so the starting basis is the identity and variable bounds never
become extra rows. Infeasible starting rows get an artificial column and a
phase-1 pass drives them to zero.

``DenseSimplex`` keeps the expanded matrix around so branch-and-bound can
re-solve the same problem under different bounds, optionally warm-started
from a parent basis with the dual simplex.
"""

from __future__ import annotations

import itertools
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

FEAS_TOL = 1e-7
OPT_TOL = 1e-7
PIVOT_TOL = 1e-10
MAX_PIVOTS = 50_000
BLAND_AFTER = 1000
REFACTOR_AFTER = 100  # pivots tolerated before the final basis is refactored
CACHE_SIZE = 16  # final tableaus kept for warm starts

# nonbasic / basic status codes used inside the tableau
LOWER, UPPER, FREE, BASIC = 0, 1, 2, 3
STATUS_NAMES = {LOWER: "lower", UPPER: "upper", FREE: "zero", BASIC: "basic"}

RELATIONS = ("<=", ">=", "=")


class LpError(Exception):
    """Base class for LP layer failures."""


class NumericalError(LpError):
    pass


class IterationLimitError(LpError):
    pass


class InvalidNodeError(LpError):
    """Bound overrides that are empty (lower > upper) or relax the base box."""


@dataclass
class LpProblem:
    objective: Sequence[float]
    rows: Sequence[tuple[Sequence[float], str, float]] = ()
    var_bounds: Sequence[tuple[float, float]] | None = None
    sense: str = "minimize"

    def __post_init__(self):
        self.objective = [float(v) for v in self.objective]
        n = len(self.objective)
        if self.var_bounds is None:
            self.var_bounds = [(0.0, math.inf)] * n
        self.var_bounds = [(float(lo), float(hi)) for lo, hi in self.var_bounds]
        self.rows = [([float(a) for a in coefs], rel, float(rhs)) for coefs, rel, rhs in self.rows]
        if self.sense not in ("minimize", "maximize"):
            raise ValueError(f"unknown sense {self.sense!r}")
        if len(self.var_bounds) != n:
            raise ValueError("var_bounds length does not match objective")
        for j, (lo, hi) in enumerate(self.var_bounds):
            if lo > hi:
                raise ValueError(f"variable {j}: lower bound {lo} > upper bound {hi}")
        for i, (coefs, rel, rhs) in enumerate(self.rows):
            if len(coefs) != n:
                raise ValueError(f"row {i} has {len(coefs)} coefficients, expected {n}")
            if rel not in RELATIONS:
                raise ValueError(f"row {i}: unknown relation {rel!r}")
            if not math.isfinite(rhs):
                raise ValueError(f"row {i}: rhs must be finite")

    @property
    def num_vars(self) -> int:
        return len(self.objective)

    @property
    def num_rows(self) -> int:
        return len(self.rows)

    def matrix(self) -> np.ndarray:
        if not self.rows:
            return np.zeros((0, self.num_vars))
        return np.array([r[0] for r in self.rows], dtype=float)

    def rhs(self) -> np.ndarray:
        return np.array([r[2] for r in self.rows], dtype=float)

    def relations(self) -> list[str]:
        return [r[1] for r in self.rows]

    def bounds_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([b[0] for b in self.var_bounds], dtype=float)
        hi = np.array([b[1] for b in self.var_bounds], dtype=float)
        return lo, hi

    def with_bounds(self, bounds: Sequence[tuple[float, float]]) -> "LpProblem":
        return LpProblem(self.objective, self.rows, bounds, self.sense)


@dataclass
class Basis:
    """Enough of a final simplex state to warm-start a related solve."""

    basic: np.ndarray  # column index per row, structural or slack only
    status: np.ndarray  # LOWER/UPPER/FREE/BASIC for every structural+slack column
    token: int = field(default=-1, compare=False)  # key into the solver's tableau cache


@dataclass
class LpSolution:
    status: str
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    objective_value: float = math.nan
    reduced_costs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    basis_status: list[str] = field(default_factory=list)
    iterations: int = 0
    basis: Basis | None = None
    status_codes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def is_optimal(self) -> bool:
        return self.status == "optimal"


class DenseSimplex:
    """Reusable solver for one constraint matrix under varying variable bounds."""

    def __init__(self, problem: LpProblem, max_pivots: int = MAX_PIVOTS):
        self.problem = problem
        self.max_pivots = max_pivots
        self.n = problem.num_vars
        self.m = problem.num_rows
        A = problem.matrix()
        self.A = np.hstack([A, np.eye(self.m)]) if self.m else np.zeros((0, self.n))
        self.b = problem.rhs()
        self.sign = 1.0 if problem.sense == "minimize" else -1.0
        self.c_orig = np.asarray(problem.objective, dtype=float)
        self.c = np.concatenate([self.sign * self.c_orig, np.zeros(self.m)])
        slack_lo = np.empty(self.m)
        slack_hi = np.empty(self.m)
        for i, rel in enumerate(problem.relations()):
            if rel == "<=":
                slack_lo[i], slack_hi[i] = 0.0, math.inf
            elif rel == ">=":
                slack_lo[i], slack_hi[i] = -math.inf, 0.0
            else:
                slack_lo[i], slack_hi[i] = 0.0, 0.0
        self.slack_lo = slack_lo
        self.slack_hi = slack_hi
        self.base_lo, self.base_hi = problem.bounds_arrays()
        self._cache: OrderedDict = OrderedDict()
        self._tokens = itertools.count()

    # ------------------------------------------------------------------ public

    def solve(self, lower=None, upper=None, warm: Basis | None = None) -> LpSolution:
        lo = np.concatenate([self.base_lo if lower is None else lower, self.slack_lo])
        hi = np.concatenate([self.base_hi if upper is None else upper, self.slack_hi])
        if np.any(lo > hi):
            return LpSolution(status="infeasible")
        if warm is not None and self.m:
            state = _Tableau.from_basis(self, lo, hi, warm)
            if state is not None:
                result = state.run_dual()
                if result == "optimal":
                    result = state.polish()
                if result is not None:
                    return self._finish(state, result)
        if self.m:
            # a dual-feasible slack basis avoids phase 1 entirely
            state = _Tableau.slack_start(self, lo, hi)
            if state is not None:
                result = state.run_dual(max_pivots=self.max_pivots)
                if result == "optimal":
                    result = state.polish()
                if result == "optimal":
                    return self._finish(state, result)
        state = _Tableau.cold(self, lo, hi)
        result = state.run_two_phase()
        if result is None:
            raise NumericalError("simplex could not reach a clean optimal basis")
        return self._finish(state, result)

    # ----------------------------------------------------------------- helpers

    def _finish(self, state: "_Tableau", status: str) -> LpSolution:
        if status != "optimal":
            return LpSolution(status=status, iterations=state.pivots)
        n = self.n
        x = state.x[:n].copy()
        obj = float(self.c_orig @ x)
        # reduced costs reported for the caller's objective direction
        rc = self.sign * state.d[:n]
        rc[state.status[:n] == BASIC] = 0.0
        names = [STATUS_NAMES[int(s)] for s in state.status[:n]]
        basis = None
        if np.all(state.basis < n + self.m):
            token = next(self._tokens)
            basis = Basis(state.basis.copy(), state.status[: n + self.m].copy(), token)
            if state.n_art == 0:
                self._cache[token] = (state.T, state.d, state.since_refactor)
                while len(self._cache) > CACHE_SIZE:
                    self._cache.popitem(last=False)
        return LpSolution(
            status="optimal",
            values=x,
            objective_value=obj,
            reduced_costs=rc,
            basis_status=names,
            iterations=state.pivots,
            basis=basis,
            status_codes=state.status[:n].copy(),
        )


class _Tableau:
    """Mutable simplex state: B^-1 A, reduced costs, values and statuses."""

    def __init__(self, owner: DenseSimplex):
        self.owner = owner
        self.pivots = 0
        self.degenerate = 0
        self.since_refactor = 0

    # ------------------------------------------------------------ construction

    @classmethod
    def cold(cls, owner: DenseSimplex, lo, hi) -> "_Tableau":
        self = cls(owner)
        n, m = owner.n, owner.m
        ncol = n + m
        status = np.full(ncol, LOWER, dtype=np.int8)
        x = np.zeros(ncol)
        fin_lo = np.isfinite(lo[:n])
        fin_hi = np.isfinite(hi[:n])
        x[:n] = np.where(fin_lo, lo[:n], np.where(fin_hi, hi[:n], 0.0))
        status[:n] = np.where(fin_lo, LOWER, np.where(fin_hi, UPPER, FREE))
        resid = owner.b - owner.A[:, :n] @ x[:n] if m else np.zeros(0)

        art_rows = []
        art_sign = []
        basis = np.empty(m, dtype=np.int64)
        for i in range(m):
            s = n + i
            v = resid[i]
            if lo[s] - FEAS_TOL <= v <= hi[s] + FEAS_TOL:
                basis[i] = s
                x[s] = v
                status[s] = BASIC
            else:
                bound = lo[s] if v < lo[s] else hi[s]
                x[s] = bound
                status[s] = LOWER if bound == lo[s] else UPPER
                r = v - bound
                art_rows.append(i)
                art_sign.append(1.0 if r > 0 else -1.0)
        k = len(art_rows)
        art = np.zeros((m, k))
        for a, (i, sg) in enumerate(zip(art_rows, art_sign)):
            art[i, a] = sg
            basis[i] = ncol + a
        self.A = np.hstack([owner.A, art]) if k else owner.A
        self.lo = np.concatenate([lo, np.zeros(k)])
        self.hi = np.concatenate([hi, np.full(k, math.inf)])
        self.status = np.concatenate([status, np.full(k, BASIC, dtype=np.int8)])
        self.x = np.concatenate([x, np.zeros(k)])
        self.n_art = k
        self.ncol = ncol
        # B is diagonal (+-1), so B^-1 A is a row sign flip
        row_sign = np.ones(m)
        for a, (i, sg) in enumerate(zip(art_rows, art_sign)):
            row_sign[i] = sg
            self.x[ncol + a] = abs(resid[i] - x[n + i])
        self.T = self.A * row_sign[:, None]
        self.basis = basis
        return self

    @classmethod
    def slack_start(cls, owner: DenseSimplex, lo, hi):
        """Slack basis with every structural at the bound its cost prefers, if one exists."""
        n, m = owner.n, owner.m
        c = owner.c[:n]
        l, u = lo[:n], hi[:n]
        at_lo = (c > 0) | ((c == 0) & np.isfinite(l))
        at_hi = ~at_lo & ((c < 0) | np.isfinite(u))
        if np.any(at_lo & ~np.isfinite(l)) or np.any(at_hi & ~np.isfinite(u)):
            return None
        free = ~at_lo & ~at_hi
        self = cls(owner)
        ncol = n + m
        self.A = owner.A
        self.lo, self.hi = lo, hi
        self.n_art = 0
        self.ncol = ncol
        status = np.full(ncol, BASIC, dtype=np.int8)
        status[:n] = np.where(at_lo, LOWER, np.where(at_hi, UPPER, FREE))
        x = np.zeros(ncol)
        x[:n] = np.where(at_lo, l, np.where(at_hi, u, 0.0))
        x[n:] = owner.b - owner.A[:, :n] @ x[:n]
        self.status = status
        self.x = x
        self.basis = np.arange(n, ncol)
        self.T = owner.A.copy()
        self.price(2)
        return self

    @classmethod
    def from_basis(cls, owner: DenseSimplex, lo, hi, warm: Basis):
        self = cls(owner)
        n, m = owner.n, owner.m
        ncol = n + m
        if len(warm.basic) != m or len(warm.status) != ncol:
            return None
        self.A = owner.A
        self.lo, self.hi = lo, hi
        self.n_art = 0
        self.ncol = ncol
        self.basis = warm.basic.copy()
        status = warm.status.copy()
        x = np.zeros(ncol)
        nb = status != BASIC
        # re-anchor nonbasic columns to whatever bounds exist under the new box
        want_lo = nb & (status == LOWER)
        want_hi = nb & (status == UPPER)
        fin_lo, fin_hi = np.isfinite(lo), np.isfinite(hi)
        new = status.copy()
        new[want_lo & ~fin_lo & fin_hi] = UPPER
        new[want_hi & ~fin_hi & fin_lo] = LOWER
        new[nb & ~fin_lo & ~fin_hi] = FREE
        new[nb & (status == FREE) & fin_lo] = LOWER
        new[nb & (status == FREE) & ~fin_lo & fin_hi] = UPPER
        x[new == LOWER] = lo[new == LOWER]
        x[new == UPPER] = hi[new == UPPER]
        self.status = new
        self.x = x
        cached = owner._cache.get(warm.token)
        if cached is not None:
            # B^-1 sits in the slack columns of the cached tableau
            T, d, since = cached
            self.T = T.copy()
            self.d = d.copy()
            self.since_refactor = since
            nbm = new != BASIC
            rhs = owner.b - self.A[:, nbm] @ x[nbm]
            self.x[self.basis] = self.T[:, n:] @ rhs
            self.status[self.basis] = BASIC
            return self
        if not self.refactor():
            return None
        return self

    # ------------------------------------------------------------- primitives

    def costs(self, phase: int) -> np.ndarray:
        if phase == 1:
            c = np.zeros(self.ncol + self.n_art)
            c[self.ncol:] = 1.0
            return c
        return np.concatenate([self.owner.c, np.zeros(self.n_art)])

    def refactor(self, phase: int = 2) -> bool:
        if not len(self.basis):
            self.T = np.zeros((0, self.A.shape[1]))
            self.price(phase)
            return True
        B = self.A[:, self.basis]
        nb = np.ones(self.A.shape[1], dtype=bool)
        nb[self.basis] = False
        rhs = self.owner.b - self.A[:, nb] @ self.x[nb]
        try:
            sol = np.linalg.solve(B, np.column_stack([self.A, rhs]))
        except np.linalg.LinAlgError:
            return False
        if not np.all(np.isfinite(sol)):
            return False
        self.T = sol[:, :-1]
        self.since_refactor = 0
        self.x[self.basis] = sol[:, -1]
        self.status[self.basis] = BASIC
        self.price(phase)
        return True

    def price(self, phase: int):
        c = self.costs(phase)
        self.d = c - c[self.basis] @ self.T
        self.d[self.basis] = 0.0

    def pivot(self, r: int, q: int):
        T = self.T
        piv = T[r, q]
        if abs(piv) < PIVOT_TOL:
            raise NumericalError(f"pivot element {piv:.3e} below tolerance")
        T[r] /= piv
        col = T[:, q].copy()
        col[r] = 0.0
        rows = np.flatnonzero(col)
        if rows.size * 2 < len(col):
            T[rows] -= np.outer(col[rows], T[r])
        else:
            T -= np.outer(col, T[r])
        self.d -= self.d[q] * T[r]
        self.d[q] = 0.0
        self.basis[r] = q
        self.status[q] = BASIC
        self.pivots += 1
        self.since_refactor += 1
        if self.pivots > self.owner.max_pivots:
            raise IterationLimitError(f"simplex exceeded {self.owner.max_pivots} pivots")

    def _set_nonbasic(self, j: int, at_upper: bool):
        self.status[j] = UPPER if at_upper else LOWER
        self.x[j] = self.hi[j] if at_upper else self.lo[j]

    # ------------------------------------------------------------ primal phase

    def primal(self, phase: int) -> str:
        """Bounded-variable primal simplex from a primal-feasible state."""
        self.price(phase)
        bland = self.degenerate >= BLAND_AFTER
        allowed = np.ones(len(self.status), dtype=bool)
        if phase == 2 and self.n_art:
            allowed[self.ncol:] = False
        while True:
            d, st = self.d, self.status
            fixed = self.lo == self.hi
            improve = np.zeros_like(d)
            mlo = (st == LOWER) & (d < -OPT_TOL)
            mhi = (st == UPPER) & (d > OPT_TOL)
            mfr = (st == FREE) & (np.abs(d) > OPT_TOL)
            cand = (mlo | mhi | mfr) & allowed & ~fixed
            if not cand.any():
                return "optimal"
            if bland:
                q = int(np.flatnonzero(cand)[0])
            else:
                improve[cand] = np.abs(d[cand])
                q = int(np.argmax(improve))
            sgn = 1.0 if d[q] < 0 else -1.0
            col = self.T[:, q]
            rate = -sgn * col  # d x_B / d t
            xb = self.x[self.basis]
            lb = self.lo[self.basis]
            ub = self.hi[self.basis]
            ratios = np.full(len(xb), math.inf)
            dec = rate < -PIVOT_TOL
            inc = rate > PIVOT_TOL
            with np.errstate(invalid="ignore", divide="ignore"):
                ratios[dec] = (xb[dec] - lb[dec]) / -rate[dec]
                ratios[inc] = (ub[inc] - xb[inc]) / rate[inc]
            ratios = np.where(np.isnan(ratios), math.inf, np.maximum(ratios, 0.0))
            t_flip = self.hi[q] - self.lo[q]
            t_row = ratios.min() if len(ratios) else math.inf
            if not math.isfinite(t_row) and not math.isfinite(t_flip):
                return "unbounded"
            if t_flip <= t_row:
                self.x[q] += sgn * t_flip
                self.x[self.basis] = xb + rate * t_flip
                self.status[q] = UPPER if sgn > 0 else LOWER
                self.pivots += 1
                continue
            ties = np.flatnonzero(ratios <= t_row + 1e-12)
            if bland:
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                r = int(ties[np.argmax(np.abs(col[ties]))])
            t = ratios[r]
            if t <= FEAS_TOL:
                self.degenerate += 1
                if self.degenerate >= BLAND_AFTER:
                    bland = True
            leaving = self.basis[r]
            hit_upper = rate[r] > 0
            self.x[self.basis] = xb + rate * t
            self.x[q] += sgn * t
            self.pivot(r, q)
            self._set_nonbasic(leaving, hit_upper)

    # -------------------------------------------------------------- dual phase

    def dual_feasible(self) -> bool:
        d, st = self.d, self.status
        fixed = self.lo == self.hi
        bad = ((st == LOWER) & (d < -OPT_TOL)) | ((st == UPPER) & (d > OPT_TOL)) | (
            (st == FREE) & (np.abs(d) > OPT_TOL)
        )
        return not np.any(bad & ~fixed)

    def run_dual(self, max_pivots: int | None = None) -> str | None:
        """Dual simplex from a dual-feasible basis; None means fall back to a cold start."""
        if not self.dual_feasible():
            return None
        limit = self.pivots + (max_pivots or 20 * (self.owner.m + 10))
        while True:
            xb = self.x[self.basis]
            lb = self.lo[self.basis]
            ub = self.hi[self.basis]
            below = lb - xb
            above = xb - ub
            viol = np.maximum(below, above)
            r = int(np.argmax(viol))
            if viol[r] <= FEAS_TOL:
                return "optimal"
            if self.pivots > limit:
                return None
            increase = below[r] > above[r]
            target = lb[r] if increase else ub[r]
            alpha = self.T[r]
            st = self.status
            free_nb = (st == FREE) & (self.lo != self.hi)
            if increase:
                elig = ((st == LOWER) & (alpha < -PIVOT_TOL)) | ((st == UPPER) & (alpha > PIVOT_TOL))
            else:
                elig = ((st == LOWER) & (alpha > PIVOT_TOL)) | ((st == UPPER) & (alpha < -PIVOT_TOL))
            elig |= free_nb & (np.abs(alpha) > PIVOT_TOL)
            elig &= self.lo != self.hi
            if not elig.any():
                return "infeasible"
            idx = np.flatnonzero(elig)
            ratios = np.abs(self.d[idx]) / np.abs(alpha[idx])
            best = ratios.min()
            ties = idx[ratios <= best + 1e-12]
            q = int(ties[np.argmax(np.abs(alpha[ties]))])
            theta = (xb[r] - target) / alpha[q]
            leaving = self.basis[r]
            self.x[self.basis] = xb - theta * self.T[:, q]
            self.x[q] += theta
            self.pivot(r, q)
            self._set_nonbasic(leaving, not increase)

    # ---------------------------------------------------------------- driver

    def run_two_phase(self) -> str:
        if self.n_art:
            self.primal(phase=1)
            infeas = float(self.x[self.ncol:].sum())
            if infeas > FEAS_TOL:
                return "infeasible"
            self._expel_artificials()
            self.lo[self.ncol:] = 0.0
            self.hi[self.ncol:] = 0.0
            self.x[self.ncol:] = 0.0
        if self.primal(phase=2) == "unbounded":
            return "unbounded"
        return self.polish()

    def _expel_artificials(self):
        for r in range(len(self.basis)):
            if self.basis[r] < self.ncol:
                continue
            row = np.abs(self.T[r, : self.ncol]).copy()
            row[self.status[: self.ncol] == BASIC] = 0.0
            j = int(np.argmax(row)) if len(row) else 0
            if len(row) and row[j] > 1e-7:
                leaving = self.basis[r]
                self.pivot(r, j)
                self.status[leaving] = LOWER
                self.x[leaving] = 0.0

    def polish(self) -> str | None:
        """Refactor from the final basis and repair any drift it exposes."""
        for attempt in range(3):
            if attempt or self.since_refactor > REFACTOR_AFTER or not self._residual_ok():
                if not self.refactor():
                    return None
            xb = self.x[self.basis]
            viol = np.maximum(self.lo[self.basis] - xb, xb - self.hi[self.basis])
            primal_ok = (viol.max() if len(viol) else 0.0) <= FEAS_TOL
            dual_ok = self.dual_feasible()
            if primal_ok and dual_ok:
                return "optimal"
            if primal_ok:
                if self.primal(phase=2) == "unbounded":
                    return "unbounded"
            elif dual_ok:
                status = self.run_dual()
                if status != "optimal":
                    return status
            else:
                return None
        return None


    def _residual_ok(self) -> bool:
        resid = self.owner.b - self.A @ self.x
        scale = 1.0 + (np.abs(self.owner.b).max() if len(self.owner.b) else 0.0)
        return np.abs(resid).max(initial=0.0) <= 1e-9 * scale


def solve_lp(problem: LpProblem) -> LpSolution:
    return DenseSimplex(problem).solve()


def apply_overrides(problem: LpProblem, bound_overrides: Mapping[int, tuple[float, float]]):
    lo, hi = problem.bounds_arrays()
    for j, (l, u) in bound_overrides.items():
        if l > u:
            raise InvalidNodeError(f"variable {j}: override lower {l} > upper {u}")
        if l < lo[j] or u > hi[j]:
            raise InvalidNodeError(f"variable {j}: override [{l}, {u}] relaxes base bounds [{lo[j]}, {hi[j]}]")
        lo[j], hi[j] = l, u
    return lo, hi


def solve_lp_with_overrides(
    problem: LpProblem,
    bound_overrides: Mapping[int, tuple[float, float]],
    solver: DenseSimplex | None = None,
    warm: Basis | None = None,
) -> LpSolution:
    lo, hi = apply_overrides(problem, bound_overrides)
    solver = solver or DenseSimplex(problem)
    return solver.solve(lo, hi, warm=warm)
