"""Command-line front end: generate, sample, train, solve and bench."""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

from . import bench
from .engine import Limits, solve, write_event_log
from .instances import CLASSES, SCALES, generate_files, read_instance
from .mlp import TrainedPolicyModel
from .pipeline import DEFAULT_TRIALS, fit_policy, split_by_instance
from .policy import PolicyConfig, run_policy
from .sampler import (EmptyPoolError, collect_pool, default_k, manifest, read_dataset, sample_instance,
                      write_dataset)
from .selectors import SELECTORS, make_selector

log = logging.getLogger("mipbb")


def env_seed(default: int = 0) -> int:
    raw = os.environ.get("MIPBB_SEED")
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"MIPBB_SEED must be an integer, got {raw!r}") from None


def instance_paths(arg) -> list[Path]:
    p = Path(arg)
    if p.is_dir():
        paths = sorted(p.glob("*.json"))
        if not paths:
            raise SystemExit(f"{p}: no instance files (*.json)")
        return paths
    if p.is_file():
        return [p]
    raise SystemExit(f"{p}: no such file or directory")


def load_instances(arg) -> list:
    return [(path.stem, read_instance(path)) for path in instance_paths(arg)]


def class_of(name: str) -> str | None:
    head = name.split("_")[0]
    return head if head in CLASSES else None


def _limits(args) -> Limits:
    return Limits(time=args.time_limit, nodes=getattr(args, "node_limit", None))


def _num(v):
    return None if v is None or (isinstance(v, float) and not math.isfinite(v)) else v


# ------------------------------------------------------------------ commands


def cmd_generate(args) -> int:
    seed = args.seed if args.seed is not None else env_seed()
    paths = generate_files(args.problem_class, args.scale, args.count, seed, args.out)
    for p in paths:
        print(p)
    return 0


def cmd_sample(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    samples = []
    names = []
    ks = set()
    for name, model in load_instances(args.instances):
        k = args.k_best or default_k(class_of(name))
        ks.add(k)
        try:
            pool = collect_pool(model, k, _limits(args))
        except EmptyPoolError as exc:
            log.warning("skipping %s", exc)
            continue
        got = sample_instance(model, pool, limits=_limits(args), instance=name)
        print(f"{name}: pool {len(pool)}, samples {len(got)}")
        samples += got
        names.append(name)
    write_dataset(samples, out / "samples.jsonl")
    meta = manifest(samples, ks.pop() if len(ks) == 1 else sorted(ks), names)
    (out / "manifest.json").write_text(json.dumps(meta, indent=1))
    print(f"{meta['samples']} samples, labels {meta['label_counts']}")
    return 0


def cmd_train(args) -> int:
    seed = args.seed if args.seed is not None else env_seed()
    samples = read_dataset(Path(args.dataset) / "samples.jsonl" if Path(args.dataset).is_dir() else args.dataset)
    train, val, test = split_by_instance(samples, seed=seed)
    fit = fit_policy(train, val, test, trials=args.trials, seed=seed, max_epochs=args.max_epochs)
    fit.policy.save(args.out)
    r = fit.report
    summary = {"train": len(train), "val": len(val), "test": len(test), "config": fit.policy.config.__dict__,
               "best_val_loss": r.best_val_loss, "test_accuracy": r.test_accuracy,
               "baseline_accuracy": r.baseline_accuracy}
    Path(args.out).with_suffix(".report.json").write_text(json.dumps(summary, indent=1, default=float))
    print(json.dumps(summary, indent=1, default=float))
    return 0


def cmd_solve(args) -> int:
    model = read_instance(args.instance)
    limits = Limits(time=args.time_limit, nodes=args.node_limit, stop_at_first_leaf=args.first_leaf)
    record = args.event_log is not None
    if args.nodesel == "ml":
        if not args.model or not args.policy_config:
            raise SystemExit("--nodesel ml needs --model and --policy-config")
        config = PolicyConfig.parse(args.policy_config, args.mode)
        trained = TrainedPolicyModel.load(args.model)
        result = run_policy(model, trained, config, limits, seed=env_seed(), record_events=record)
    else:
        result = solve(model, make_selector(args.nodesel), limits=limits, record_events=record)
    if record:
        write_event_log(result.event_log, args.event_log)
    out = {
        "status": result.status, "objective": _num(result.best_objective),
        "nodes": result.nodes_processed, "time": result.solving_time, "gap": _num(result.final_gap),
        "first_leaf_depth": result.first_leaf_depth, "dual_bound": _num(result.dual_bound),
    }
    if args.nodesel == "ml":
        out["agreement"] = result.extra["policy"].agreement
    print(json.dumps(out, indent=1))
    return 0


def cmd_bench(args) -> int:
    instances = load_instances(args.instances)
    policies = [p.strip() for p in args.policies.split(",")] if args.policies else []
    trained = TrainedPolicyModel.load(args.model) if args.model else None
    plan = bench.ExperimentPlan(args.experiment, instances, policies, trained, env_seed(),
                                args.time_limit, args.abort_cap, args.restart_every)
    report = bench.run_experiment(plan)
    for path in report.write(args.out, plots=args.plots):
        print(path)
    if report.selected:
        print(json.dumps(report.selected, indent=1, default=float))
    return 0


# -------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mipbb", description="Branch and bound with learned node selection")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write random instances")
    g.add_argument("--class", dest="problem_class", choices=CLASSES, required=True)
    g.add_argument("--scale", choices=SCALES, default="desk")
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--seed", type=int, help="first seed (default: MIPBB_SEED or 0)")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("sample", help="label branchings against best-k solution pools")
    s.add_argument("--instances", required=True, help="instance file or directory")
    s.add_argument("--k-best", type=int, help="pool size (default: 40 for indset, else 10)")
    s.add_argument("--time-limit", type=float)
    s.add_argument("--node-limit", type=int)
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_sample)

    t = sub.add_parser("train", help="fit a policy network (split by instance)")
    t.add_argument("--dataset", required=True, help="samples.jsonl or a sample directory")
    t.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    t.add_argument("--max-epochs", type=int, default=200)
    t.add_argument("--seed", type=int)
    t.add_argument("--out", required=True, help="model file")
    t.set_defaults(func=cmd_train)

    v = sub.add_parser("solve", help="solve one instance")
    v.add_argument("instance")
    v.add_argument("--nodesel", choices=sorted(SELECTORS) + ["ml"], default="bestestimate")
    v.add_argument("--policy-config", help="e.g. ML_PR, ML_SRF, ML_P.T")
    v.add_argument("--model")
    v.add_argument("--mode", choices=("exact", "heuristic"))
    v.add_argument("--time-limit", type=float)
    v.add_argument("--node-limit", type=int)
    v.add_argument("--first-leaf", action="store_true", help="stop at the first leaf")
    v.add_argument("--event-log", help="write a JSONL node event log")
    v.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="run one experiment and write CSV reports")
    b.add_argument("--experiment", choices=bench.EXPERIMENTS, required=True)
    b.add_argument("--instances", required=True)
    b.add_argument("--policies", help="comma-separated; default depends on the experiment")
    b.add_argument("--model")
    b.add_argument("--time-limit", type=float, help="cap for any single run")
    b.add_argument("--abort-cap", type=float, default=14)
    b.add_argument("--restart-every", type=int, default=100)
    b.add_argument("--out", required=True, help="report CSV path")
    b.add_argument("--plots", action="store_true", help="also write PNG figures")
    b.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"mipbb: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
