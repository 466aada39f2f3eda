"""State features at a freshly branched node, and the dataset preprocessor.

The vector describes the branched variable, the two children and the search
as a whole. All objective-valued entries are in the engine's minimization
sense so maximization problems look the same to a model. A missing
incumbent is encoded as zeros plus ``gap_is_infinite = 1``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .engine import integrality_gap
from .lp import BASIC, FREE, LOWER, UPPER

VARIABLE_FEATURES = [
    "type_binary", "type_integer", "type_implied_integer", "type_continuous",
    "coef", "has_lb", "has_ub", "sol_is_at_lb", "sol_is_at_ub", "sol_frac",
    "basis_lower", "basis_basic", "basis_upper", "basis_zero",
    "reduced_cost", "age", "sol_val", "inc_val", "avg_inc_val",
]
NODE_FEATURES = [
    f"{side}_node_{name}"
    for side in ("left", "right")
    for name in ("lower_bound", "estimate", "branch_bound", "is_prio")
]
GLOBAL_FEATURES = [
    "global_upper_bound", "global_lower_bound", "integrality_gap", "gap_is_infinite",
    "depth", "n_strongbranch_lp_iterations", "n_node_lp_iterations", "max_depth",
]
FEATURE_NAMES = VARIABLE_FEATURES + NODE_FEATURES + GLOBAL_FEATURES
NUM_FEATURES = len(FEATURE_NAMES)

_CATEGORICAL = {
    "type_binary", "type_integer", "type_implied_integer", "type_continuous",
    "has_lb", "has_ub", "sol_is_at_lb", "sol_is_at_ub",
    "basis_lower", "basis_basic", "basis_upper", "basis_zero",
    "left_node_is_prio", "right_node_is_prio", "gap_is_infinite",
}
CATEGORICAL_MASK = np.array([name in _CATEGORICAL for name in FEATURE_NAMES])
INDEX = {name: i for i, name in enumerate(FEATURE_NAMES)}

_TYPES = ("binary", "integer", "implied-integer", "continuous")
_BASIS = (LOWER, BASIC, UPPER, FREE)
AT_BOUND_TOL = 1e-6


def variable_features(var_type: str, coef: float, lo: float, hi: float, value: float,
                      basis_code: int, reduced_cost: float, age: float,
                      inc_val: float, avg_inc_val: float) -> list[float]:
    """The branched-variable block; ``coef`` and ``reduced_cost`` already normalized."""
    types = [float(var_type == t) for t in _TYPES]
    basis = [float(basis_code == b) for b in _BASIS]
    return types + [
        coef,
        float(math.isfinite(lo)),
        float(math.isfinite(hi)),
        float(math.isfinite(lo) and abs(value - lo) <= AT_BOUND_TOL),
        float(math.isfinite(hi) and abs(value - hi) <= AT_BOUND_TOL),
        value - math.floor(value),
    ] + basis + [reduced_cost, age, value, inc_val, avg_inc_val]


def extract(tree, node, relaxation, left, right, decision) -> np.ndarray:
    """Feature vector at ``node`` whose children ``left`` and ``right`` were just created."""
    if left is None or right is None:
        raise ValueError("features are only defined at a node with two children")
    model = tree.model
    j = decision.var
    c = np.asarray(model.lp.objective, dtype=float)
    cnorm = float(np.abs(c).max()) or 1.0
    lo, hi = tree.node_bounds(node)
    inc = tree.bounds.incumbent
    history = tree.bounds.incumbent_history
    lp_count = max(tree.lp_count, 1)
    age = (tree.lp_count - tree.status_changed_at[j]) / lp_count
    var = variable_features(
        model.integrality[j],
        tree.sign * c[j] / cnorm,
        lo[j], hi[j],
        float(relaxation.values[j]),
        int(relaxation.status_codes[j]),
        tree.sign * float(relaxation.reduced_costs[j]) / cnorm,
        float(age),
        float(inc[j]) if inc is not None else 0.0,
        float(tree.incumbent_sum[j] / len(history)) if history else 0.0,
    )
    nodes = []
    for child, bound in ((left, decision.floor), (right, decision.floor + 1)):
        nodes += [child.dual_bound, child.estimate, bound, float(child.is_prio_child)]

    upper = tree.bounds.primal_bound
    lower = tree.global_dual_bound(min(left.dual_bound, right.dual_bound))
    gap = integrality_gap(upper, lower)
    infinite = not math.isfinite(gap)
    glob = [
        upper if math.isfinite(upper) else 0.0,
        lower if math.isfinite(lower) else 0.0,
        0.0 if infinite else gap,
        float(infinite),
        float(node.depth),
        0.0,
        float(tree.node_lp_iterations),
        float(tree.max_depth),
    ]
    return np.array(var + nodes + glob, dtype=float)


@dataclass
class Preprocessor:
    """Drops constant columns and z-scores the non-categorical survivors."""

    kept: list
    mean: np.ndarray
    std: np.ndarray
    categorical: np.ndarray
    input_dim: int = NUM_FEATURES

    @classmethod
    def fit(cls, X, categorical_mask=CATEGORICAL_MASK, tol: float = 1e-12) -> "Preprocessor":
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[0] == 0:
            raise ValueError("cannot fit a preprocessor on an empty matrix")
        if X.shape[0] < 2:
            raise ValueError("need at least two samples to fit")
        std = X.std(axis=0)
        kept = [int(i) for i in np.flatnonzero(std > tol)]
        cat = np.asarray(categorical_mask, dtype=bool)[kept]
        mean = np.where(cat, 0.0, X[:, kept].mean(axis=0))
        scale = np.where(cat, 1.0, std[kept])
        return cls(kept, mean, scale, cat, X.shape[1])

    @property
    def output_dim(self) -> int:
        return len(self.kept)

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.input_dim:
            raise ValueError(f"expected {self.input_dim} raw features, got {X.shape[-1]}")
        return (X[..., self.kept] - self.mean) / self.std

    def inverse_transform(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.std + self.mean

    def to_dict(self) -> dict:
        return {
            "kept": self.kept,
            "kept_names": [FEATURE_NAMES[i] for i in self.kept] if self.input_dim == NUM_FEATURES else None,
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "categorical": self.categorical.astype(int).tolist(),
            "input_dim": self.input_dim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Preprocessor":
        return cls([int(i) for i in d["kept"]], np.array(d["mean"], dtype=float),
                   np.array(d["std"], dtype=float), np.array(d["categorical"], dtype=bool),
                   int(d["input_dim"]))

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=1))
        return path

    @classmethod
    def load(cls, path) -> "Preprocessor":
        return cls.from_dict(json.loads(Path(path).read_text()))
