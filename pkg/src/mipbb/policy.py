"""The learned child-selection policy, used as an exact selector or a pruner.

Configurations are named ``ML_{on_both}{on_leaf}{prune_on_both}``: two
letters (``ML_PR``) is an exact selector, a trailing ``F`` or ``T`` makes it
a heuristic that prunes the child it did not pick. With ``T`` the search
stops at the first leaf, so the on_leaf letter may be omitted or written
as a dot (``ML_PT``, ``ML_P.T``, ``ML_P·T``).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .engine import Limits, MipModel, SolveResult, solve
from .features import extract
from .selectors import RestartDFS

ON_BOTH = {"P": "PrioChild", "S": "Second", "R": "Random"}
ON_LEAF = {"R": "RestartDFS", "B": "BestEstimate", "S": "Score"}
_NAME = re.compile(r"^(?:ML_?)?([PSR])([RBS.·])?([TF])?$", re.IGNORECASE)


@dataclass(frozen=True)
class PolicyConfig:
    on_both: str = "PrioChild"
    on_leaf: str | None = "RestartDFS"
    prune_on_both: bool = False
    mode: str = "exact"

    def __post_init__(self):
        if self.on_both not in ON_BOTH.values():
            raise ValueError(f"unknown on_both {self.on_both!r}")
        if self.mode not in ("exact", "heuristic"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "exact" and self.prune_on_both:
            raise ValueError("exact mode never prunes")
        if self.on_leaf is None and not (self.mode == "heuristic" and self.prune_on_both):
            raise ValueError("on_leaf is required unless the search stops at the first leaf")
        if self.on_leaf is not None and self.on_leaf not in ON_LEAF.values():
            raise ValueError(f"unknown on_leaf {self.on_leaf!r}")

    @property
    def name(self) -> str:
        both = self.on_both[0]
        if self.mode == "exact":
            return f"ML_{both}{_leaf_letter(self.on_leaf)}"
        if self.prune_on_both:
            return f"ML_{both}{_leaf_letter(self.on_leaf) if self.on_leaf else '·'}T"
        return f"ML_{both}{_leaf_letter(self.on_leaf)}F"

    @classmethod
    def parse(cls, text: str, mode: str | None = None) -> "PolicyConfig":
        m = _NAME.match(text.strip())
        if not m:
            raise ValueError(f"cannot parse policy config {text!r}")
        both, leaf, prune = (g.upper() if g else None for g in m.groups())
        if leaf in (".", "·"):
            leaf = None
        if prune is None:
            if leaf is None:
                raise ValueError(f"{text!r}: exact configs need an on_leaf letter")
            config = cls(ON_BOTH[both], ON_LEAF[leaf], False, "exact")
        elif prune == "T":
            config = cls(ON_BOTH[both], ON_LEAF[leaf] if leaf else None, True, "heuristic")
        else:
            if leaf is None:
                raise ValueError(f"{text!r}: prune_on_both=False needs an on_leaf letter")
            config = cls(ON_BOTH[both], ON_LEAF[leaf], False, "heuristic")
        if mode is not None and mode != config.mode:
            raise ValueError(f"{text!r} is a {config.mode} config, not {mode}")
        return config


def _leaf_letter(on_leaf: str) -> str:
    return {v: k for k, v in ON_LEAF.items()}[on_leaf]


def exact_configs() -> list[PolicyConfig]:
    return [PolicyConfig(b, l, False, "exact") for l in ON_LEAF.values() for b in ON_BOTH.values()]


def heuristic_configs() -> list[PolicyConfig]:
    keep = [PolicyConfig(b, l, False, "heuristic") for l in ON_LEAF.values() for b in ON_BOTH.values()]
    dive = [PolicyConfig(b, None, True, "heuristic") for b in ON_BOTH.values()]
    return keep + dive


@dataclass
class PolicyDecision:
    probs: np.ndarray  # (p_L, p_R, p_B)
    label: str
    chosen: str  # left or right
    pruned_sibling: bool
    scores: tuple  # (left, right)
    prio: str = "none"

    @property
    def followed_prio(self) -> bool:
        return self.chosen == effective_prio(self.prio)


def effective_prio(prio: str) -> str:
    return "left" if prio == "none" else prio


def decide(probs, config: PolicyConfig, prio: str = "none", rng=None) -> PolicyDecision:
    p = np.asarray(probs, dtype=float)
    label = "LRB"[int(np.argmax(p))]
    if label == "L":
        chosen = "left"
    elif label == "R":
        chosen = "right"
    elif config.on_both == "PrioChild":
        chosen = effective_prio(prio)
    elif config.on_both == "Second":
        chosen = "left" if p[0] >= p[1] else "right"
    else:
        rng = rng if rng is not None else np.random.default_rng()
        chosen = "left" if rng.random() < 0.5 else "right"
    heuristic = config.mode == "heuristic"
    pruned = heuristic and (label != "B" or config.prune_on_both)
    scores = (float(p[0] + p[2]), float(p[1] + p[2]))
    return PolicyDecision(p, label, chosen, pruned, scores, prio)


def on_leaf_select(tree, config: PolicyConfig, leaf_state=None) -> int:
    if config.on_leaf == "Score":
        return tree.open.best("score")
    if config.on_leaf == "BestEstimate":
        return tree.open.best("estimate")
    if config.on_leaf == "RestartDFS":
        return leaf_state.select(tree)
    raise ValueError("no on_leaf rule configured but the search needs one")


@dataclass
class PolicyStats:
    decisions: int = 0
    followed_prio: int = 0
    labels: dict = field(default_factory=lambda: {"L": 0, "R": 0, "B": 0})

    @property
    def agreement(self) -> float | None:
        return self.followed_prio / self.decisions if self.decisions else None


class MLPolicy:
    """Engine selector (and, in heuristic mode, pruner) driven by a trained model."""

    name = "ml"

    def __init__(self, trained, config: PolicyConfig, seed: int = 0, restart_every: int = 100):
        self.trained = trained
        self.config = config
        self.rng = np.random.default_rng(seed)
        self.leaf_state = RestartDFS(restart_every)
        self.stats = PolicyStats()
        self.history: list[PolicyDecision] = []
        self._chosen: int | None = None
        self._prune: list[int] = []

    def on_branch(self, tree, node, relaxation, left, right, decision):
        feats = extract(tree, node, relaxation, left, right, decision)
        probs = self.trained.predict_proba(feats)
        d = decide(probs, self.config, decision.prio, self.rng)
        left.policy_score, right.policy_score = d.scores
        self._chosen = left.id if d.chosen == "left" else right.id
        other = right.id if d.chosen == "left" else left.id
        self._prune = [other] if d.pruned_sibling else []
        self.history.append(d)
        self.stats.decisions += 1
        self.stats.followed_prio += d.followed_prio
        self.stats.labels[d.label] += 1

    def prune(self, tree, node, left, right, decision):
        return self._prune if self.config.mode == "heuristic" else []

    def select(self, tree) -> int:
        if self._chosen is not None and self._chosen in tree.last_children and self._chosen in tree.open:
            return self._chosen
        if self.config.on_leaf is None:
            # a single dive keeps at most one open node: the root before the first branching
            return tree.open.best("dfs")
        return on_leaf_select(tree, self.config, self.leaf_state)


def run_policy(model: MipModel, trained, config: PolicyConfig, limits: Limits | None = None,
               seed: int = 0, **kwargs) -> SolveResult:
    policy = MLPolicy(trained, config, seed)
    pruner = policy if config.mode == "heuristic" else None
    result = solve(model, policy, pruner, limits, **kwargs)
    result.extra["policy"] = policy.stats
    return result
