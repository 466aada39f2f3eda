"""Random MIP instance generators and the JSON instance format.

The four problem classes follow the classic generators used in the learning
to branch literature: Balas-Ho set cover, Barabasi-Albert independent set,
Cornuejols capacitated facility location and Leyton-Brown "arbitrary
relationships" combinatorial auctions. Every constant is a keyword so that
deviations from the reference generator stay visible.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .engine import MipModel
from .lp import LpProblem

log = logging.getLogger(__name__)

CLASSES = ("setcover", "indset", "facility", "cauctions")
SCALES = ("desk", "paper", "hard")

# size parameters per (class, scale); desk sizes solve in about a second each
SIZES = {
    "setcover": {
        "desk": {"n_cols": 300, "n_rows": 150},
        "paper": {"n_cols": 2000, "n_rows": 1000},
        "hard": {"n_cols": 4000, "n_rows": 2000},
    },
    "indset": {
        "desk": {"n_nodes": 100},
        "paper": {"n_nodes": 1000},
        "hard": {"n_nodes": 1500},
    },
    "facility": {
        "desk": {"n_customers": 30, "n_facilities": 15},
        "paper": {"n_customers": 150, "n_facilities": 150},
        "hard": {"n_customers": 200, "n_facilities": 150},
    },
    "cauctions": {
        "desk": {"n_items": 40, "n_bids": 120},
        "paper": {"n_items": 400, "n_bids": 1200},
        "hard": {"n_items": 600, "n_bids": 1800},
    },
}

MAX_REGENERATIONS = 20


class InstanceFormatError(ValueError):
    pass


@dataclass
class InstanceSpec:
    problem_class: str
    seed: int = 0
    scale: str = "desk"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.problem_class not in CLASSES:
            raise ValueError(f"unknown problem class {self.problem_class!r}")
        if self.scale not in SCALES:
            raise ValueError(f"unknown scale {self.scale!r}")

    def size(self) -> dict:
        return {**SIZES[self.problem_class][self.scale], **self.params}

    @property
    def name(self) -> str:
        return f"{self.problem_class}_{self.seed}"


def generate(spec: InstanceSpec) -> MipModel:
    gen = _GENERATORS[spec.problem_class]
    for offset in range(MAX_REGENERATIONS):
        rng = np.random.default_rng(spec.seed + offset)
        model = gen(rng, **spec.size())
        if _structurally_feasible(model):
            model.name = spec.name
            return model
        log.warning("%s: infeasible draw, regenerating with seed %d", spec.name, spec.seed + offset + 1)
    raise RuntimeError(f"{spec.name}: no feasible draw after {MAX_REGENERATIONS} attempts")


# --------------------------------------------------------------- set cover


def setcover(rng, n_rows=250, n_cols=500, density=0.05, max_coef=100) -> MipModel:
    """Balas-Ho set cover: each row is covered by >= 1 column, each column hits >= 2 rows."""
    nnz = int(n_rows * n_cols * density)
    nnz = max(nnz, n_rows, 2 * n_cols)
    cols = rng.integers(n_cols, size=nnz)
    cols[: 2 * n_cols] = np.repeat(np.arange(n_cols), 2)
    _, col_counts = np.unique(cols, return_counts=True)
    col_counts = np.minimum(col_counts, n_rows)

    A = np.zeros((n_rows, n_cols))
    forced = rng.permutation(n_rows)
    # the first n_rows entries (in column order) pin every row to some column
    pos = 0
    for j, count in enumerate(col_counts):
        rows = []
        for k in range(count):
            if pos + k < n_rows:
                rows.append(forced[pos + k])
        rest = count - len(rows)
        if rest > 0:
            pool = np.setdiff1d(np.arange(n_rows), rows, assume_unique=False)
            rows.extend(rng.choice(pool, size=rest, replace=False))
        A[rows, j] = 1.0
        pos += count
    # any row left uncovered by the truncation above gets a random column
    for i in np.flatnonzero(A.sum(axis=1) == 0):
        A[i, rng.integers(n_cols)] = 1.0
    costs = rng.integers(1, max_coef + 1, size=n_cols).astype(float)
    lp = LpProblem(costs, [(row, ">=", 1.0) for row in A], [(0.0, 1.0)] * n_cols, "minimize")
    return MipModel(lp, ["binary"] * n_cols)


# ------------------------------------------------------ independent set


def barabasi_albert_edges(rng, n_nodes: int, affinity: int = 4) -> list[tuple[int, int]]:
    """Preferential-attachment graph; every new node links to ``affinity`` existing ones."""
    if not 1 <= affinity < n_nodes:
        raise ValueError("need 1 <= affinity < n_nodes")
    edges = []
    degrees = np.zeros(n_nodes)
    for new in range(affinity, n_nodes):
        if new == affinity:
            targets = np.arange(affinity)
        else:
            p = degrees[:new] / degrees[:new].sum()
            targets = rng.choice(new, size=affinity, replace=False, p=p)
        for t in sorted(int(t) for t in targets):
            edges.append((t, new))
            degrees[t] += 1
            degrees[new] += 1
    return edges


def indset(rng, n_nodes=250, affinity=4) -> MipModel:
    edges = barabasi_albert_edges(rng, n_nodes, affinity)
    rows = []
    for u, v in edges:
        row = np.zeros(n_nodes)
        row[u] = row[v] = 1.0
        rows.append((row, "<=", 1.0))
    lp = LpProblem(np.ones(n_nodes), rows, [(0.0, 1.0)] * n_nodes, "maximize")
    return MipModel(lp, ["binary"] * n_nodes)


# ------------------------------------------------ capacitated facility


def facility(rng, n_customers=35, n_facilities=35, ratio=5.0, total_capacity_row=True) -> MipModel:
    """Cornuejols et al. capacitated facility location.

    Variables are ordered x_{ij} (customer i served by facility j, continuous
    fraction of demand) followed by the binary opening decisions y_j.
    """
    c_x, c_y = rng.random(n_customers), rng.random(n_customers)
    f_x, f_y = rng.random(n_facilities), rng.random(n_facilities)
    demand = rng.integers(5, 36, size=n_customers).astype(float)
    capacity = rng.integers(10, 161, size=n_facilities).astype(float)
    fixed = (rng.integers(100, 111, size=n_facilities) * np.sqrt(capacity)
             + rng.integers(0, 91, size=n_facilities)).astype(int).astype(float)
    capacity = np.floor(capacity * ratio * demand.sum() / capacity.sum())
    dist = np.sqrt((c_x[:, None] - f_x[None, :]) ** 2 + (c_y[:, None] - f_y[None, :]) ** 2)
    trans = dist * 10.0 * demand[:, None]

    nx = n_customers * n_facilities
    n = nx + n_facilities
    obj = np.concatenate([trans.ravel(), fixed])
    rows = []
    for i in range(n_customers):
        row = np.zeros(n)
        row[i * n_facilities:(i + 1) * n_facilities] = 1.0
        rows.append((row, ">=", 1.0))
    for j in range(n_facilities):
        row = np.zeros(n)
        row[j:nx:n_facilities] = demand
        row[nx + j] = -capacity[j]
        rows.append((row, "<=", 0.0))
    if total_capacity_row:
        row = np.zeros(n)
        row[nx:] = capacity
        rows.append((row, ">=", float(demand.sum())))
    bounds = [(0.0, 1.0)] * n
    integrality = ["continuous"] * nx + ["binary"] * n_facilities
    return MipModel(LpProblem(obj, rows, bounds, "minimize"), integrality)


# ------------------------------------------------ combinatorial auctions


def cauctions(rng, n_items=100, n_bids=500, min_value=1.0, max_value=100.0, max_deviation=0.5,
              add_prob=0.7, max_sub_bids=5, additivity=0.2, budget_factor=1.5,
              resale_factor=0.5) -> MipModel:
    """Leyton-Brown arbitrary-relationships bids; XOR bidders share a dummy item."""
    values = min_value + (max_value - min_value) * rng.random(n_items)
    compat = np.triu(rng.random((n_items, n_items)), k=1)
    compat = compat + compat.T
    compat = compat / compat.sum(axis=1)

    def next_item(chosen, interests):
        p = (1 - chosen) * compat[chosen.astype(bool), :].mean(axis=0) * interests
        return int(rng.choice(n_items, p=p / p.sum()))

    bids: list[tuple[list[int], float]] = []
    n_dummy = 0
    while len(bids) < n_bids:
        interests = rng.random(n_items)
        private = values + max_value * max_deviation * (2 * interests - 1)
        chosen = np.zeros(n_items)
        chosen[rng.choice(n_items, p=interests / interests.sum())] = 1
        while rng.random() < add_prob and chosen.sum() < n_items:
            chosen[next_item(chosen, interests)] = 1
        bundle = np.flatnonzero(chosen)
        price = private[bundle].sum() + len(bundle) ** (1 + additivity)
        if price < 0:
            continue
        bidder = {frozenset(bundle.tolist()): price}

        candidates = []
        for item in bundle:
            sub = np.zeros(n_items)
            sub[item] = 1
            while sub.sum() < len(bundle):
                sub[next_item(sub, interests)] = 1
            sub_bundle = np.flatnonzero(sub)
            candidates.append((sub_bundle, private[sub_bundle].sum() + len(sub_bundle) ** (1 + additivity)))
        budget = budget_factor * price
        min_resale = resale_factor * values[bundle].sum()
        for k in np.argsort([-p for _, p in candidates], kind="stable"):
            sub_bundle, sub_price = candidates[k]
            if len(bidder) >= max_sub_bids + 1 or len(bids) + len(bidder) >= n_bids:
                break
            key = frozenset(sub_bundle.tolist())
            if sub_price < 0 or sub_price > budget or values[sub_bundle].sum() < min_resale or key in bidder:
                continue
            bidder[key] = sub_price
        dummy = []
        if len(bidder) > 2:
            dummy = [n_items + n_dummy]
            n_dummy += 1
        for key, p in bidder.items():
            bids.append((sorted(key) + dummy, float(p)))

    bids = bids[:n_bids]
    n = len(bids)
    per_item: list[list[int]] = [[] for _ in range(n_items + n_dummy)]
    for b, (bundle, _) in enumerate(bids):
        for item in bundle:
            per_item[item].append(b)
    rows = []
    for takers in per_item:
        if len(takers) > 1:
            row = np.zeros(n)
            row[takers] = 1.0
            rows.append((row, "<=", 1.0))
    obj = np.array([p for _, p in bids])
    return MipModel(LpProblem(obj, rows, [(0.0, 1.0)] * n, "maximize"), ["binary"] * n)


_GENERATORS = {
    "setcover": setcover,
    "indset": indset,
    "facility": facility,
    "cauctions": cauctions,
}


def _structurally_feasible(model: MipModel) -> bool:
    """Cheap certificate: the all-upper (covering) or all-zero (packing) point."""
    lo, hi = model.lp.bounds_arrays()
    for point in (lo, hi):
        if _satisfies(model, point):
            return True
    # facility location: open everything and split each demand in proportion to capacity
    A = model.lp.matrix()
    n_bin = sum(1 for t in model.integrality if t == "binary")
    n_cont = model.num_vars - n_bin
    if n_cont and n_bin and n_cont % n_bin == 0:
        capacity = np.maximum(-A[:, n_cont:].min(axis=0), 0.0)
        if capacity.sum() <= 0:
            return False
        x = np.ones(model.num_vars)
        x[:n_cont] = np.tile(capacity / capacity.sum(), n_cont // n_bin)
        return _satisfies(model, x)
    return False


def _satisfies(model: MipModel, x: np.ndarray, tol: float = 1e-9) -> bool:
    lp = model.lp
    if not lp.rows:
        return True
    act = lp.matrix() @ x
    b = lp.rhs()
    for a, rel, rhs in zip(act, lp.relations(), b):
        if rel == "<=" and a > rhs + tol:
            return False
        if rel == ">=" and a < rhs - tol:
            return False
        if rel == "=" and abs(a - rhs) > tol:
            return False
    return True


# ------------------------------------------------------------- file format


def _num(v: float):
    if math.isinf(v):
        return None
    return int(v) if float(v).is_integer() and abs(v) < 2**53 else v


def to_dict(model: MipModel) -> dict:
    lp = model.lp
    rows = []
    for coefs, rel, rhs in lp.rows:
        idx = [j for j, a in enumerate(coefs) if a != 0.0]
        rows.append({"idx": idx, "val": [_num(coefs[j]) for j in idx], "rel": rel, "rhs": _num(rhs)})
    return {
        "name": model.name,
        "sense": lp.sense,
        "objective": [_num(c) for c in lp.objective],
        "bounds": [[_num(lo), _num(hi)] for lo, hi in lp.var_bounds],
        "integrality": list(model.integrality),
        "rows": rows,
    }


def from_dict(data: dict, source: str = "<dict>") -> MipModel:
    try:
        n = len(data["objective"])
        bounds = [(-math.inf if lo is None else float(lo), math.inf if hi is None else float(hi))
                  for lo, hi in data["bounds"]]
        rows = []
        for k, row in enumerate(data["rows"]):
            coefs = [0.0] * n
            for j, v in zip(row["idx"], row["val"], strict=True):
                coefs[j] = float(v)
            rows.append((coefs, row["rel"], float(row["rhs"])))
        lp = LpProblem([float(c) for c in data["objective"]], rows, bounds, data["sense"])
        return MipModel(lp, list(data["integrality"]), name=data.get("name", ""))
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise InstanceFormatError(f"{source}: invalid instance: {exc!r}") from exc


def dumps(model: MipModel) -> str:
    # one row per line keeps files diffable and parse errors line-addressable
    d = to_dict(model)
    rows = d.pop("rows")
    head = json.dumps(d, sort_keys=True, separators=(",", ":"))
    lines = [head[:-1] + ',"rows":[']
    for k, row in enumerate(rows):
        sep = "," if k + 1 < len(rows) else ""
        lines.append(json.dumps(row, sort_keys=True, separators=(",", ":")) + sep)
    lines.append("]}")
    return "\n".join(lines) + "\n"


def loads(text: str, source: str = "<string>") -> MipModel:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return from_dict(data, source)


def write_instance(model: MipModel, path) -> Path:
    path = Path(path)
    path.write_text(dumps(model))
    return path


def read_instance(path) -> MipModel:
    path = Path(path)
    return loads(path.read_text(), str(path))


def generate_files(problem_class: str, scale: str, count: int, seed: int, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for s in range(seed, seed + count):
        model = generate(InstanceSpec(problem_class, s, scale))
        paths.append(write_instance(model, out / f"{problem_class}_{s}.json"))
    return paths
