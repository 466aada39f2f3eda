"""Acceptance suite: one PASS/FAIL line per criterion, printed even under output capture."""

import math
import time

import numpy as np
import pytest

from mipbb.bench import ExperimentPlan, run_experiment
from mipbb.engine import solve
from mipbb.instances import CLASSES, InstanceSpec, generate
from mipbb.lp import solve_lp
from mipbb.mlp import MlpModel, grad_check
from mipbb.pipeline import desk_dataset, fit_policy, split_by_instance
from mipbb.policy import exact_configs, heuristic_configs, run_policy
from mipbb.sampler import SolutionPool, sample_instance
from mipbb.selectors import BFS, DFS, BestEstimate, RestartDFS
from mipbb.stats import harmonic_mean2, paired_t_test, shifted_geo_mean
from oracles import (TOY_POOL, brute_force, random_binary_mip, random_lp, student_t_p, toy_model,
                     vertex_enumeration)

MIN_SAMPLES = 2000
MIN_INSTANCES = 20
K_BEST = 10
TEST_SEEDS = range(20)  # training instances start at seed 1000, so the two sets never overlap


def verdict(capsys, number: int, ok: bool, detail: str):
    with capsys.disabled():
        print(f"\ncriterion {number:2d}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, detail


@pytest.fixture(scope="session")
def setcover_pipeline():
    t0 = time.perf_counter()
    samples, names = desk_dataset("setcover", MIN_SAMPLES, MIN_INSTANCES, K_BEST)
    train, val, test = split_by_instance(samples, seed=0)
    fit = fit_policy(train, val, test, seed=0)
    return {"samples": samples, "names": names, "fit": fit, "seconds": time.perf_counter() - t0}


@pytest.fixture(scope="session")
def setcover_test_instances():
    return [(m.name, m) for m in (generate(InstanceSpec("setcover", s, "desk")) for s in TEST_SEEDS)]


def test_criterion_01_solver_exactness(capsys):
    t0 = time.perf_counter()
    failures = []
    for seed in range(50):
        rng = np.random.default_rng(seed)
        model = random_binary_mip(rng, int(rng.integers(2, 13)), int(rng.integers(1, 11)))
        expected = brute_force(model)
        for make in (DFS, BFS, RestartDFS, BestEstimate):
            result = solve(model, make(), record_events=False)
            if expected is None:
                ok = result.status == "infeasible"
            else:
                ok = result.status == "optimal" and abs(result.best_objective - expected) <= 1e-6
            if not ok:
                failures.append((seed, make.__name__))
    elapsed = time.perf_counter() - t0
    verdict(capsys, 1, not failures and elapsed < 60,
            f"50 MIPs x 4 selectors, mismatches {failures}, {elapsed:.1f}s")


def test_criterion_02_lp_oracle(capsys):
    mismatches = 0
    for seed in range(100):
        rng = np.random.default_rng(10_000 + seed)
        lp = random_lp(rng, int(rng.integers(1, 7)), int(rng.integers(1, 7)))
        expected = vertex_enumeration(lp)
        sol = solve_lp(lp)
        if expected is None:
            mismatches += sol.status != "infeasible"
        else:
            mismatches += not (sol.status == "optimal" and abs(sol.objective_value - expected) <= 1e-6)
    verdict(capsys, 2, mismatches == 0, f"100 LPs vs vertex enumeration, {mismatches} mismatches")


def test_criterion_03_worked_example(capsys):
    samples = sample_instance(toy_model(), SolutionPool.from_points(TOY_POOL))
    labels = [(s.node, s.label) for s in samples]
    ok = labels[:2] == [(0, "B"), (1, "L")] and all(node != 4 for node, _ in labels)
    verdict(capsys, 3, ok, f"(node, label) sequence {labels}; node 4 must be skipped")


def test_criterion_04_learning_lift(capsys, setcover_pipeline):
    p = setcover_pipeline
    r = p["fit"].report
    n, k = len(p["samples"]), len(p["names"])
    ok = (n >= MIN_SAMPLES and k >= MIN_INSTANCES and r.test_accuracy >= r.baseline_accuracy + 0.05
          and p["seconds"] < 900)
    verdict(capsys, 4, ok, f"{n} samples from {k} instances, test accuracy {r.test_accuracy:.3f} vs "
                           f"baseline {r.baseline_accuracy:.3f}, {p['seconds']:.0f}s")


def test_criterion_05_exact_policies(capsys, setcover_pipeline, setcover_test_instances):
    policy = setcover_pipeline["fit"].policy
    mismatches = []
    for name, model in setcover_test_instances:
        reference = solve(model, DFS(), record_events=False).best_objective
        for config in exact_configs():
            result = run_policy(model, policy, config, seed=0, record_events=False)
            if result.status != "optimal" or abs(result.best_objective - reference) > 1e-6:
                mismatches.append((name, config.name))
    verdict(capsys, 5, not mismatches,
            f"9 exact configs x {len(setcover_test_instances)} instances, mismatches {mismatches}")


def test_criterion_06_single_dive(capsys, setcover_pipeline):
    policy = setcover_pipeline["fit"].policy
    dives = [c for c in heuristic_configs() if c.prune_on_both]
    runs, broken = 0, []
    for problem_class in CLASSES:
        for seed in range(5):
            model = generate(InstanceSpec(problem_class, seed, "desk"))
            for config in dives:
                result = run_policy(model, policy, config, seed=seed, record_events=False)
                runs += 1
                if result.nodes_processed != result.first_leaf_depth + 1:
                    broken.append((model.name, config.name))
    verdict(capsys, 6, not broken, f"{runs} single-dive runs over {len(CLASSES)} classes, violations {broken}")


def test_criterion_07_gradient_check(capsys):
    rng = np.random.default_rng(0)
    model = MlpModel(5, [8, 6], dropout=0.2, rng=rng)
    X, y = rng.normal(size=(24, 5)), rng.integers(0, 3, size=24)
    err = grad_check(model, X, y)
    verdict(capsys, 7, err < 1e-4, f"{model.num_parameters()} parameters, 2 hidden BN layers, max error {err:.2e}")


def test_criterion_08_statistics(capsys):
    sgm = shifted_geo_mean([1, 3], 1)
    hm = harmonic_mean2(2, 0.5)
    rng = np.random.default_rng(8)
    x = rng.normal(size=12)
    y = x + rng.normal(0.3, 0.8, size=12)
    t = paired_t_test(x, y)
    ref = student_t_p(t.statistic, t.df)
    ok = abs(sgm - (math.sqrt(8) - 1)) <= 1e-9 and abs(hm - 0.8) <= 1e-12 and abs(t.p_value - ref) <= 1e-6
    verdict(capsys, 8, ok, f"sgm {sgm:.12f}, hm {hm:.12f}, p {t.p_value:.10f} vs oracle {ref:.10f}")


def test_criterion_09_imitation(capsys, setcover_pipeline, setcover_test_instances):
    plan = ExperimentPlan("imitate", setcover_test_instances, model=setcover_pipeline["fit"].policy)
    sel = run_experiment(plan).selected
    agreement = sel["agreement_pooled"]
    identical = sel["shallow_identical"] == sel["shallow_instances"]
    verdict(capsys, 9, agreement >= 0.8 and identical,
            f"pooled agreement {agreement:.3f} over {sel['decisions']} decisions; identical (depth, gap) on "
            f"{sel['shallow_identical']}/{sel['shallow_instances']} instances with first leaf above the cap")


def test_criterion_10_time_limited(capsys, setcover_pipeline, setcover_test_instances):
    plan = ExperimentPlan("timelimit", setcover_test_instances, model=setcover_pipeline["fit"].policy)
    report = run_experiment(plan)
    cells = report.rows
    finite = sum(math.isfinite(r["gap"]) for r in cells) / len(cells)
    chosen = report.selected["policy"]
    test = [t for t in report.tests if t["versus"] == "bestestimate" and t["policy"] == chosen]
    ok = finite >= 0.9 and len(test) == 1 and math.isfinite(test[0]["p_value"])
    direction = ""
    if test:
        t = test[0]
        direction = (f"{chosen} mean gap {t['mean_policy']:.4f} vs bestestimate {t['mean_versus']:.4f}, "
                     f"t={t['statistic']:.3f} p={t['p_value']:.3g}{t['stars']}")
    verdict(capsys, 10, ok, f"finite gaps in {finite:.0%} of {len(cells)} cells; {direction}")
