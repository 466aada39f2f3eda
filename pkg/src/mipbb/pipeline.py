"""Glue between sampling and training: datasets, instance-level splits, policy fitting."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .engine import Limits
from .features import Preprocessor
from .instances import InstanceSpec, generate
from .mlp import TrainedPolicyModel, TrainReport, hyper_search
from .sampler import EmptyPoolError, as_arrays, sample_model

log = logging.getLogger(__name__)

SPLIT = (0.6, 0.2, 0.2)
DEFAULT_TRIALS = 10


def build_dataset(named_models, k_best: int, limits: Limits | None = None) -> list:
    """Samples from every (name, model); instances without a feasible solution are skipped."""
    samples = []
    for name, model in named_models:
        try:
            got = sample_model(model, k_best, limits, instance=name)
        except EmptyPoolError as exc:
            log.warning("%s", exc)
            continue
        log.info("%s: %d samples", name, len(got))
        samples += got
    return samples


def split_by_instance(samples, fractions=SPLIT, seed: int = 0) -> tuple[list, list, list]:
    """Train/validation/test split that keeps each instance's samples together."""
    names = sorted({s.instance for s in samples})
    if len(names) < 3:
        raise ValueError("need samples from at least three instances to split")
    order = list(np.random.default_rng(seed).permutation(names))
    n_val = max(1, round(fractions[1] * len(order)))
    n_test = max(1, round(fractions[2] * len(order)))
    n_train = len(order) - n_val - n_test
    if n_train < 1:
        raise ValueError("not enough instances for a training split")
    groups = (set(order[:n_train]), set(order[n_train:n_train + n_val]), set(order[n_train + n_val:]))
    return tuple([s for s in samples if s.instance in g] for g in groups)


@dataclass
class FitResult:
    policy: TrainedPolicyModel
    report: TrainReport
    trials: list


def fit_policy(train, val, test=None, trials: int = DEFAULT_TRIALS, seed: int = 0, **train_kwargs) -> FitResult:
    X, y, _ = as_arrays(train)
    Xv, yv, _ = as_arrays(val)
    pre = Preprocessor.fit(X)
    test_xy = None
    if test:
        Xt, yt, _ = as_arrays(test)
        test_xy = (pre.transform(Xt), yt)
    result = hyper_search((pre.transform(X), y), (pre.transform(Xv), yv), trials, seed, test_xy, **train_kwargs)
    return FitResult(TrainedPolicyModel(result.config, pre, result.model), result.report, result.trials)


def desk_dataset(problem_class: str, min_samples: int, min_instances: int, k_best: int,
                 first_seed: int = 1000, max_instances: int = 2000, scale: str = "desk"):
    """Sample fresh instances until both the sample and instance quotas are met."""
    samples, names = [], []
    for seed in range(first_seed, first_seed + max_instances):
        if len(samples) >= min_samples and len(names) >= min_instances:
            break
        model = generate(InstanceSpec(problem_class, seed, scale))
        samples += build_dataset([(model.name, model)], k_best)
        names.append(model.name)
    else:
        raise RuntimeError(f"quota not met after {max_instances} instances ({len(samples)} samples)")
    return samples, names
