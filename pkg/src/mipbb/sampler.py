"""Imitation data from best-k solution paths.

Phase one runs an exact search that keeps the k best distinct solutions it
finds. Phase two replays an unsteered search and, at every branching,
labels the decision by which children still contain one of those solutions:
``L`` (left only), ``R`` (right only), ``B`` (both) or nothing at all.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .engine import Limits, MipModel, solve
from .features import FEATURE_NAMES, extract
from .selectors import BestEstimate

log = logging.getLogger(__name__)

LABELS = ("L", "R", "B")
LABEL_INDEX = {label: i for i, label in enumerate(LABELS)}
DEFAULT_K = {"indset": 40}
CONTAIN_TOL = 1e-6


class EmptyPoolError(RuntimeError):
    pass


def default_k(problem_class: str | None) -> int:
    return DEFAULT_K.get(problem_class or "", 10)


@dataclass
class SolutionPool:
    k_best: int
    solutions: list = field(default_factory=list)  # (objective, values), best first

    def __len__(self):
        return len(self.solutions)

    def vectors(self) -> list:
        return [x for _, x in self.solutions]

    def objectives(self) -> list:
        return [o for o, _ in self.solutions]

    @classmethod
    def from_points(cls, points, objectives=None, k_best: int | None = None) -> "SolutionPool":
        vecs = [np.asarray(p, dtype=float) for p in points]
        objs = list(objectives) if objectives is not None else [float("nan")] * len(vecs)
        return cls(k_best or len(vecs), list(zip(objs, vecs)))


@dataclass
class TrainingSample:
    features: np.ndarray
    label: str
    instance: str
    node: int

    def to_dict(self) -> dict:
        return {"instance": self.instance, "node": self.node, "label": self.label,
                "features": [float(v) for v in self.features]}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingSample":
        if d["label"] not in LABELS:
            raise ValueError(f"bad label {d['label']!r}")
        return cls(np.array(d["features"], dtype=float), d["label"], d["instance"], int(d["node"]))


def collect_pool(model: MipModel, k_best: int, limits: Limits | None = None, selector=None) -> SolutionPool:
    """Exact search pruned against the k-th best solution found so far."""
    if k_best < 1:
        raise ValueError("k_best must be positive")
    result = solve(model, selector or BestEstimate(), limits=limits, pool_size=k_best, record_events=False)
    if not result.pool:
        raise EmptyPoolError(f"{model.name or 'model'}: no feasible solution found")
    return SolutionPool(k_best, list(result.pool))


def subtree_contains(bound_changes: dict, solution, tol: float = CONTAIN_TOL) -> bool:
    x = np.asarray(solution, dtype=float)
    for j, (lo, hi) in bound_changes.items():
        if x[j] < lo - tol or x[j] > hi + tol:
            return False
    return True


def label_children(left_bounds: dict, right_bounds: dict, pool) -> str | None:
    """L, R or B by which side still holds a pool solution; None means skip."""
    vectors = pool.vectors() if isinstance(pool, SolutionPool) else list(pool)
    in_left = any(subtree_contains(left_bounds, x) for x in vectors)
    in_right = any(subtree_contains(right_bounds, x) for x in vectors)
    if in_left and in_right:
        return "B"
    if in_left:
        return "L"
    if in_right:
        return "R"
    return None


class SampleRecorder:
    """Branch hook that records (features, label) at every labelable branching."""

    def __init__(self, pool: SolutionPool, instance: str = ""):
        self.pool = pool
        self.instance = instance
        self.samples: list[TrainingSample] = []
        self.skipped = 0

    def __call__(self, tree, node, relaxation, left, right, decision):
        label = label_children(left.bound_changes, right.bound_changes, self.pool)
        if label is None:
            self.skipped += 1
            return
        feats = extract(tree, node, relaxation, left, right, decision)
        self.samples.append(TrainingSample(feats, label, self.instance, node.id))


def sample_instance(model: MipModel, pool: SolutionPool, selector=None, limits: Limits | None = None,
                    instance: str | None = None) -> list[TrainingSample]:
    if not len(pool):
        raise EmptyPoolError("cannot label against an empty pool")
    recorder = SampleRecorder(pool, instance if instance is not None else model.name)
    solve(model, selector or BestEstimate(), limits=limits, on_branch=[recorder], record_events=False)
    return recorder.samples


def sample_model(model: MipModel, k_best: int, limits: Limits | None = None,
                 instance: str | None = None) -> list[TrainingSample]:
    pool = collect_pool(model, k_best, limits)
    return sample_instance(model, pool, limits=limits, instance=instance)


# ------------------------------------------------------------------ files


def write_dataset(samples, path) -> Path:
    path = Path(path)
    with path.open("w") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_dict(), sort_keys=True) + "\n")
    return path


def read_dataset(path) -> list[TrainingSample]:
    samples = []
    with Path(path).open() as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                samples.append(TrainingSample.from_dict(json.loads(line)))
            except (ValueError, KeyError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return samples


def manifest(samples, k_best: int, instances=None) -> dict:
    counts = Counter(s.label for s in samples)
    total = sum(counts.values())
    return {
        "k_best": k_best,
        "samples": total,
        "instances": sorted(set(instances if instances is not None else (s.instance for s in samples))),
        "label_counts": {label: counts.get(label, 0) for label in LABELS},
        "label_fractions": {label: (counts.get(label, 0) / total if total else 0.0) for label in LABELS},
        "feature_names": FEATURE_NAMES,
    }


def as_arrays(samples) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    X = np.array([s.features for s in samples], dtype=float).reshape(len(samples), -1)
    y = np.array([LABEL_INDEX[s.label] for s in samples], dtype=int)
    groups = np.array([s.instance for s in samples])
    return X, y, groups
