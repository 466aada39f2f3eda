"""Open-node bookkeeping and the classical node selection rules.

A selector is any object with ``select(tree) -> node id``; ``tree`` is the
running :class:`~mipbb.engine.BranchAndBound`, from which selectors read
``tree.open`` and ``tree.last_children``.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np


def _score_key(node, seq):
    score = node.policy_score if node.policy_score is not None else -math.inf
    return (-score, node.id)


ORDERINGS = {
    "dfs": lambda node, seq: (-node.depth, -seq),
    "bfs": lambda node, seq: (node.depth, seq),
    "bound": lambda node, seq: (node.dual_bound, node.id),
    "estimate": lambda node, seq: (node.estimate, node.id),
    "score": _score_key,
}


class OpenNodeSet:
    """Open nodes keyed by id, with lazily built heaps for each ordering."""

    def __init__(self):
        self._nodes = {}
        self._seq = {}
        self._counter = 0
        self._heaps: dict[str, list] = {}

    def __len__(self):
        return len(self._nodes)

    def __contains__(self, node_id):
        return node_id in self._nodes

    def __iter__(self):
        return iter(self._nodes.values())

    def get(self, node_id):
        return self._nodes[node_id]

    def add(self, node):
        if node.id in self._nodes:
            raise ValueError(f"node {node.id} already open")
        self._nodes[node.id] = node
        self._seq[node.id] = self._counter
        for name, heap in self._heaps.items():
            heapq.heappush(heap, (ORDERINGS[name](node, self._counter), node.id))
        self._counter += 1

    def pop(self, node_id):
        self._seq.pop(node_id)
        return self._nodes.pop(node_id)

    def best(self, ordering: str) -> int:
        if not self._nodes:
            raise IndexError("open node set is empty")
        heap = self._heaps.get(ordering)
        if heap is None:
            key = ORDERINGS[ordering]
            heap = [(key(n, self._seq[i]), i) for i, n in self._nodes.items()]
            heapq.heapify(heap)
            self._heaps[ordering] = heap
        while heap[0][1] not in self._nodes:
            heapq.heappop(heap)
        return heap[0][1]


class DFS:
    name = "dfs"

    def select(self, tree) -> int:
        return tree.open.best("dfs")


class BFS:
    name = "bfs"

    def select(self, tree) -> int:
        return tree.open.best("bfs")


class RestartDFS:
    """Depth-first search that jumps to the best-bound node every ``restart_every`` picks."""

    name = "restartdfs"

    def __init__(self, restart_every: int = 100):
        if restart_every < 1:
            raise ValueError("restart_every must be >= 1")
        self.restart_every = restart_every
        self.counter = 0

    def select(self, tree) -> int:
        self.counter += 1
        if self.counter >= self.restart_every:
            self.counter = 0
            return tree.open.best("bound")
        return tree.open.best("dfs")


def best_estimate_score(dual_bound: float, fractions, psi_down, psi_up) -> float:
    """dual bound plus the cheaper pseudo-cost rounding penalty of each fractional variable."""
    f = np.asarray(fractions, dtype=float)
    if f.size == 0:
        return float(dual_bound)
    penalty = np.minimum(np.asarray(psi_down) * f, np.asarray(psi_up) * (1.0 - f))
    return float(dual_bound + penalty.sum())


@dataclass
class PlungeState:
    abort_cap: float = 14
    plunge_start_depth: int = 0
    length: int = 0
    aborts: int = 0


def preferred_child(tree, child_ids):
    """The priority child among the just-created ones (left when there is no priority)."""
    nodes = [tree.open.get(i) for i in child_ids]
    if len(nodes) == 1:
        return nodes[0].id
    for node in nodes:
        if node.is_prio_child:
            return node.id
    for node in nodes:
        if node.is_left_child:
            return node.id
    return nodes[0].id


class BestEstimate:
    """Plunge into the priority child; otherwise take the minimum-estimate node."""

    name = "bestestimate"

    def __init__(self, abort_cap: float = 14):
        self.plunge = PlungeState(abort_cap=abort_cap)

    def select(self, tree) -> int:
        children = [i for i in (tree.last_children or ()) if i in tree.open]
        p = self.plunge
        if children and p.length < p.abort_cap:
            p.length += 1
            return preferred_child(tree, children)
        if children:
            p.aborts += 1
        node_id = tree.open.best("estimate")
        p.length = 0
        p.plunge_start_depth = tree.open.get(node_id).depth
        return node_id


SELECTORS = {
    "dfs": DFS,
    "bfs": BFS,
    "restartdfs": RestartDFS,
    "bestestimate": BestEstimate,
}


def make_selector(name: str, **kwargs):
    try:
        cls = SELECTORS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown node selector {name!r}; choose from {sorted(SELECTORS)}") from None
    return cls(**kwargs)
