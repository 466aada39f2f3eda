"""Benchmark experiments: first solution, exact solving, time-limited gaps and imitation.

Every experiment produces per-run rows, per-policy aggregate rows and, where
the protocol calls for it, paired t-tests. Gaps are relative optimality gaps
against an exact reference solve. When a run ends without its own solution,
its gap is measured on the root-LP rounding solution and the row's
``source`` column says so.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .engine import Limits, MipModel, SolveResult, optimality_gap, solve
from .lp import DenseSimplex
from .policy import MLPolicy, PolicyConfig, exact_configs, heuristic_configs
from .selectors import BestEstimate, make_selector
from .stats import harmonic_mean2, paired_t_test, pareto_front, shifted_geo_mean

log = logging.getLogger(__name__)

EXPERIMENTS = ("first", "exact", "timelimit", "imitate")
BASELINES = ("dfs", "restartdfs", "bestestimate")
REFERENCE = "bestestimate"

ROW_COLUMNS = [
    "experiment", "instance", "policy", "status", "time", "nodes", "objective", "optimum",
    "gap", "source", "first_leaf_depth", "depth", "time_limit", "agreement", "decisions", "aborted",
]


def default_policies(experiment: str) -> list[str]:
    if experiment == "first":
        return list(BASELINES) + [c.name for c in heuristic_configs() if c.prune_on_both]
    if experiment == "exact":
        return list(BASELINES) + [c.name for c in exact_configs()]
    if experiment == "timelimit":
        return list(BASELINES) + [c.name for c in heuristic_configs()]
    if experiment == "imitate":
        return ["ML_P·T", "bestestimate"]
    raise ValueError(f"unknown experiment {experiment!r}")


def is_baseline(name: str) -> bool:
    return name.lower() in ("dfs", "bfs", "restartdfs", "bestestimate")


@dataclass
class ExperimentPlan:
    experiment: str
    instances: list  # (name, MipModel)
    policies: list[str] = field(default_factory=list)
    model: object = None  # TrainedPolicyModel
    seed: int = 0
    time_limit: float | None = None  # cap for any single run
    abort_cap: float = 14
    restart_every: int = 100

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if not self.policies:
            self.policies = default_policies(self.experiment)


@dataclass
class BenchReport:
    experiment: str
    rows: list = field(default_factory=list)
    aggregates: list = field(default_factory=list)
    tests: list = field(default_factory=list)
    selected: dict | None = None
    notes: list = field(default_factory=list)

    def policy_rows(self, policy: str) -> list[dict]:
        return [r for r in self.rows if r["policy"] == policy]

    def aggregate(self, policy: str) -> dict:
        for a in self.aggregates:
            if a["policy"] == policy:
                return a
        raise KeyError(policy)

    def write(self, out, plots: bool = False) -> list[Path]:
        out = Path(out)
        out.parent.mkdir(parents=True, exist_ok=True)
        written = [_write_csv(out, self.rows, ROW_COLUMNS)]
        stem = out.with_suffix("")
        if self.aggregates:
            written.append(_write_csv(Path(f"{stem}_summary.csv"), self.aggregates))
        if self.tests:
            written.append(_write_csv(Path(f"{stem}_ttests.csv"), self.tests))
        meta = {"experiment": self.experiment, "selected": self.selected, "notes": self.notes}
        meta_path = Path(f"{stem}.json")
        meta_path.write_text(json.dumps(meta, indent=1, default=_json_default))
        written.append(meta_path)
        if plots:
            from .plots import render_report

            written += render_report(self, stem)
        return written


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    raise TypeError(type(v))


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return v


def _write_csv(path: Path, rows: list[dict], columns: list[str] | None = None) -> Path:
    if columns is None:
        columns = []
        for r in rows:
            columns += [k for k in r if k not in columns]
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k)) for k in columns})
    return path


def read_rows(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


# --------------------------------------------------------------- primitives


def run_seed(seed: int, instance: str, policy: str) -> int:
    return int(np.random.SeedSequence([seed, zlib.crc32(instance.encode()), zlib.crc32(policy.encode())])
               .generate_state(1)[0])


def rounding_solution(model: MipModel, values) -> tuple[float, np.ndarray] | None:
    """Best feasible point among nearest/up/down roundings of the integer variables.

    Continuous variables are re-optimized with the integer part fixed.
    """
    lp = model.lp
    lo, hi = lp.bounds_arrays()
    integer = np.array([t != "continuous" for t in model.integrality])
    x = np.asarray(values, dtype=float)
    sign = 1.0 if lp.sense == "minimize" else -1.0
    solver = None
    best = None
    for rounder in (np.round, np.ceil, np.floor):
        fixed = np.clip(rounder(x), lo, hi)
        if integer.all():
            cand = fixed
            if not _feasible(model, cand):
                continue
        else:
            solver = solver or DenseSimplex(lp)
            l2, h2 = lo.copy(), hi.copy()
            l2[integer] = h2[integer] = fixed[integer]
            sol = solver.solve(l2, h2)
            if not sol.is_optimal:
                continue
            cand = np.where(integer, fixed, sol.values)
        obj = model.objective_of(cand)
        if best is None or sign * obj < sign * best[0]:
            best = (obj, cand)
    return best


def _feasible(model: MipModel, x, tol: float = 1e-7) -> bool:
    lp = model.lp
    if not lp.rows:
        return True
    act = lp.matrix() @ x
    for a, rel, b in zip(act, lp.relations(), lp.rhs()):
        if (rel == "<=" and a > b + tol) or (rel == ">=" and a < b - tol) or (rel == "=" and abs(a - b) > tol):
            return False
    return True


class InstanceContext:
    """Per-instance reference data shared by all policies: optimum and rounding solution."""

    def __init__(self, name: str, model: MipModel, time_limit: float | None = None):
        self.name = name
        self.model = model
        ref = solve(model, BestEstimate(), limits=Limits(time=time_limit), record_events=False)
        self.reference = ref
        self.optimum = ref.best_objective if ref.status == "optimal" else None
        self.rounding = rounding_solution(model, ref.root_values) if ref.root_values is not None else None
        self.sign = 1.0 if model.lp.sense == "minimize" else -1.0

    @property
    def initial_gap(self) -> float:
        if self.rounding is None or self.optimum is None:
            return math.inf
        return optimality_gap(self.rounding[0], self.optimum)

    def solution_gap(self, result: SolveResult) -> tuple[float, float, str]:
        """(objective, gap, source) using the run's incumbent or the rounding fallback."""
        own = result.best_objective if result.incumbent is not None else None
        fallback = self.rounding[0] if self.rounding is not None else None
        if own is not None and (fallback is None or self.sign * own <= self.sign * fallback):
            obj, source = own, "search"
        elif fallback is not None:
            obj, source = fallback, "rounding"
        else:
            return math.nan, math.inf, "none"
        if self.optimum is None:
            return obj, math.inf, source
        return obj, optimality_gap(obj, self.optimum), source


def make_runner(policy: str, plan: ExperimentPlan, instance: str):
    """Return (selector, pruner, config) for a policy name."""
    if is_baseline(policy):
        name = policy.lower()
        kwargs = {}
        if name == "bestestimate":
            kwargs["abort_cap"] = plan.abort_cap
        if name == "restartdfs":
            kwargs["restart_every"] = plan.restart_every
        return make_selector(name, **kwargs), None, None
    config = PolicyConfig.parse(policy)
    if plan.model is None:
        raise ValueError(f"policy {policy} needs a trained model (--model)")
    ml = MLPolicy(plan.model, config, run_seed(plan.seed, instance, config.name), plan.restart_every)
    return ml, (ml if config.mode == "heuristic" else None), config


def run_one(ctx: InstanceContext, policy: str, plan: ExperimentPlan, limits: Limits) -> tuple[SolveResult, dict]:
    selector, pruner, config = make_runner(policy, plan, ctx.name)
    result = solve(ctx.model, selector, pruner, limits, record_events=False)
    obj, gap, source = ctx.solution_gap(result)
    row = {
        "instance": ctx.name,
        "policy": policy,
        "status": result.status,
        "time": result.solving_time,
        "nodes": result.nodes_processed,
        "objective": obj,
        "optimum": ctx.optimum,
        "gap": gap,
        "source": source,
        "first_leaf_depth": result.first_leaf_depth,
        "time_limit": limits.time,
    }
    if isinstance(selector, MLPolicy):
        row["agreement"] = selector.stats.agreement
        row["decisions"] = selector.stats.decisions
        row["followed_prio"] = selector.stats.followed_prio
    if isinstance(selector, BestEstimate):
        row["aborted"] = selector.plunge.aborts > 0
    return result, row


def _contexts(plan: ExperimentPlan) -> list[InstanceContext]:
    return [InstanceContext(name, model, plan.time_limit) for name, model in plan.instances]


def _finite(values):
    return [v for v in values if v is not None and math.isfinite(v)]


def _aggregate(report: BenchReport, policy: str, metrics=("time", "nodes", "gap"), **extra) -> dict:
    rows = report.policy_rows(policy)
    agg = {"policy": policy, "runs": len(rows)}
    for key in metrics:
        vals = _finite(r.get(key) for r in rows)
        agg[f"{key}_count"] = len(vals)
        agg[f"{key}_mean"] = float(np.mean(vals)) if vals else math.nan
        agg[f"{key}_sgm"] = shifted_geo_mean(vals) if vals else math.nan
    agg.update(extra)
    report.aggregates.append(agg)
    return agg


def _ttest_row(metric: str, a: str, b: str, xa, xb) -> dict:
    pairs = [(x, y) for x, y in zip(xa, xb) if x is not None and y is not None
             and math.isfinite(x) and math.isfinite(y)]
    row = {"metric": metric, "policy": a, "versus": b, "pairs": len(pairs)}
    if len(pairs) < 2:
        row.update(statistic=math.nan, p_value=math.nan, stars="", degenerate=True)
        return row
    t = paired_t_test([p[0] for p in pairs], [p[1] for p in pairs])
    row.update(statistic=t.statistic, p_value=t.p_value, stars=t.stars, degenerate=t.degenerate,
               mean_policy=float(np.mean([p[0] for p in pairs])),
               mean_versus=float(np.mean([p[1] for p in pairs])))
    return row


def _by_instance(report: BenchReport, policy: str, metric: str, instances: list[str]):
    lookup = {r["instance"]: r.get(metric) for r in report.policy_rows(policy)}
    return [lookup.get(i) for i in instances]


# -------------------------------------------------------------- experiments


def run_experiment_first_solution(plan: ExperimentPlan) -> BenchReport:
    report = BenchReport("first")
    for ctx in _contexts(plan):
        for policy in plan.policies:
            _, row = run_one(ctx, policy, plan, Limits(time=plan.time_limit, stop_at_first_leaf=True))
            row["experiment"] = "first"
            row["depth"] = row["first_leaf_depth"]
            report.rows.append(row)
    aggs = [_aggregate(report, p) for p in plan.policies]
    points = [(a["time_mean"], a["gap_mean"]) for a in aggs]
    usable = [all(math.isfinite(v) for v in pt) for pt in points]
    mask = pareto_front([pt for pt, ok in zip(points, usable) if ok]) if any(usable) else []
    it = iter(mask)
    for a, ok in zip(aggs, usable):
        a["pareto"] = bool(next(it)) if ok else False
    report.notes.append("time is engine start to first leaf; gap uses the root rounding solution when the dive found none")
    return report


def run_experiment_exact(plan: ExperimentPlan) -> BenchReport:
    report = BenchReport("exact")
    names = []
    for ctx in _contexts(plan):
        names.append(ctx.name)
        for policy in plan.policies:
            result, row = run_one(ctx, policy, plan, Limits(time=plan.time_limit))
            row["experiment"] = "exact"
            row["objective"] = result.best_objective
            row["gap"] = (optimality_gap(result.best_objective, ctx.optimum)
                          if ctx.optimum is not None and result.incumbent is not None else math.inf)
            row["source"] = "search"
            row["limit_reached"] = result.status != "optimal"
            report.rows.append(row)
    for policy in plan.policies:
        rows = report.policy_rows(policy)
        solved = [r for r in rows if not r["limit_reached"]]
        agg = {"policy": policy, "runs": len(rows), "solved": len(solved), "limit_reached": len(rows) - len(solved)}
        for key in ("time", "nodes"):
            vals = [r[key] for r in solved]
            agg[f"{key}_mean"] = float(np.mean(vals)) if vals else math.nan
            agg[f"{key}_sgm"] = shifted_geo_mean(vals) if vals else math.nan
        report.aggregates.append(agg)
    if REFERENCE in plan.policies:
        for policy in plan.policies:
            if policy == REFERENCE:
                continue
            for metric in ("time", "nodes"):
                xa = [None if r["limit_reached"] else r[metric] for r in _rows_in(report, policy, names)]
                xb = [None if r["limit_reached"] else r[metric] for r in _rows_in(report, REFERENCE, names)]
                report.tests.append(_ttest_row(metric, policy, REFERENCE, xa, xb))
    report.notes.append("limit-reached runs are excluded from the means and counted in limit_reached")
    return report


def _rows_in(report: BenchReport, policy: str, names: list[str]) -> list[dict]:
    lookup = {r["instance"]: r for r in report.policy_rows(policy)}
    return [lookup[n] for n in names]


def select_policy(aggregates: list[dict]) -> dict:
    """Lowest harmonic mean of mean time and mean gap; a zero mean gap wins outright."""
    best, best_key = None, None
    for a in aggregates:
        t, g = a["time_mean"], a["gap_mean"]
        if not (math.isfinite(t) and math.isfinite(g)):
            continue
        if g <= 0:
            key = (0, t)
            hm = 0.0
        else:
            hm = harmonic_mean2(max(t, 1e-12), g)
            key = (1, hm)
        if best_key is None or key < best_key:
            best, best_key = dict(a, harmonic_mean=hm), key
    if best is None:
        raise ValueError("no policy has finite mean time and gap")
    return best


def run_experiment_time_limited(plan: ExperimentPlan) -> BenchReport:
    report = BenchReport("timelimit")
    ml_names = [p for p in plan.policies if not is_baseline(p)]
    baselines = [p for p in plan.policies if is_baseline(p)]
    if not ml_names:
        raise ValueError("the time-limited experiment needs at least one heuristic ML policy")
    contexts = _contexts(plan)
    names = [c.name for c in contexts]
    for ctx in contexts:
        for policy in ml_names:
            if PolicyConfig.parse(policy).mode != "heuristic":
                raise ValueError(f"{policy} is not a heuristic policy")
            _, row = run_one(ctx, policy, plan, Limits(time=plan.time_limit))
            row.update(experiment="timelimit", phase="ml")
            report.rows.append(row)
    ml_aggs = [_aggregate(report, p, metrics=("time", "gap"), phase="ml") for p in ml_names]
    selected = select_policy(ml_aggs)
    report.selected = {"policy": selected["policy"], "harmonic_mean": selected["harmonic_mean"],
                       "time_mean": selected["time_mean"], "gap_mean": selected["gap_mean"]}
    ml_times = dict(zip(names, _by_instance(report, selected["policy"], "time", names)))
    for ctx in contexts:
        for policy in baselines:
            _, row = run_one(ctx, policy, plan, Limits(time=ml_times[ctx.name]))
            row.update(experiment="timelimit", phase="baseline")
            report.rows.append(row)
    for policy in baselines:
        _aggregate(report, policy, metrics=("time", "gap"), phase="baseline")
    init = [c.initial_gap for c in contexts]
    fin = _finite(init)
    report.aggregates.append({
        "policy": "initial", "phase": "root-rounding", "runs": len(init),
        "gap_count": len(fin), "gap_mean": float(np.mean(fin)) if fin else math.nan,
        "gap_sgm": shifted_geo_mean(fin) if fin else math.nan,
    })
    chosen = selected["policy"]
    for policy in baselines:
        report.tests.append(_ttest_row("gap", chosen, policy,
                                       _by_instance(report, chosen, "gap", names),
                                       _by_instance(report, policy, "gap", names)))
    report.notes.append("baselines get the selected ML policy's per-instance time as a wall-clock limit, "
                        "checked at node boundaries")
    report.notes.append("initial gap: root LP with nearest/up/down rounding repair, before any branching")
    return report


def run_experiment_imitation(plan: ExperimentPlan) -> BenchReport:
    report = BenchReport("imitate")
    ml_names = [p for p in plan.policies if not is_baseline(p)]
    if len(ml_names) != 1 or REFERENCE not in plan.policies:
        raise ValueError("the imitation experiment compares one ML policy with bestestimate")
    ml_name = ml_names[0]
    config = PolicyConfig.parse(ml_name)
    if config.on_both != "PrioChild":
        log.warning("imitation analysis is meant for PrioChild policies, got %s", ml_name)
    if config.mode != "heuristic" or not config.prune_on_both:
        config = PolicyConfig(config.on_both, None, True, "heuristic")
        ml_name = config.name
    identical = eligible = 0
    for ctx in _contexts(plan):
        res_ml, row_ml = run_one(ctx, ml_name, plan, Limits(time=plan.time_limit, stop_at_first_leaf=True))
        res_be, row_be = run_one(ctx, REFERENCE, plan,
                                 Limits(time=plan.time_limit, stop_at_first_plunge=True))
        row_ml["depth"] = res_ml.first_leaf_depth
        row_be["depth"] = res_be.first_plunge_depth
        be_leaf = res_be.first_leaf_depth is not None and res_be.first_leaf_depth == res_be.first_plunge_depth
        row_be["aborted"] = not be_leaf
        same = (row_ml["depth"] == row_be["depth"] and
                (row_ml["gap"] == row_be["gap"] or (math.isnan(row_ml["gap"]) and math.isnan(row_be["gap"]))))
        shallow = be_leaf and res_be.first_plunge_depth < plan.abort_cap
        for row in (row_ml, row_be):
            row.update(experiment="imitate", identical=same, shallow=shallow)
        report.rows += [row_ml, row_be]
        eligible += shallow
        identical += shallow and same
    for policy in (ml_name, REFERENCE):
        _aggregate(report, policy, metrics=("depth", "gap"))
    ml_rows = report.policy_rows(ml_name)
    rates = [r["agreement"] for r in ml_rows if r.get("agreement") is not None]
    decisions = sum(r["decisions"] for r in ml_rows)
    report.selected = {
        "policy": ml_name,
        "agreement_mean": float(np.mean(rates)) if rates else math.nan,
        "agreement_pooled": sum(r["followed_prio"] for r in ml_rows) / decisions if decisions else math.nan,
        "decisions": decisions,
        "shallow_instances": eligible,
        "shallow_identical": identical,
        "abort_cap": plan.abort_cap,
        "aborts": sum(bool(r.get("aborted")) for r in report.policy_rows(REFERENCE)),
    }
    report.notes.append("agreement counts decisions that picked the priority child (left when there is none)")
    return report


RUNNERS = {
    "first": run_experiment_first_solution,
    "exact": run_experiment_exact,
    "timelimit": run_experiment_time_limited,
    "imitate": run_experiment_imitation,
}


def run_experiment(plan: ExperimentPlan) -> BenchReport:
    return RUNNERS[plan.experiment](plan)
