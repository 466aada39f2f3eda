"""A small numpy multi-layer perceptron for three-way child classification.

Each hidden layer is Linear -> ReLU -> BatchNorm -> Dropout; the output is a
Linear layer followed by softmax. Training minimizes cross-entropy with Adam
and keeps the parameters of the best validation epoch.
"""

from __future__ import annotations

import copy
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .features import Preprocessor

log = logging.getLogger(__name__)

NUM_CLASSES = 3
BN_EPS = 1e-5
BN_MOMENTUM = 0.1
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
BATCH_SIZE = 1024
PATIENCE = 30
MAX_EPOCHS = 200
LR_DECAY = 0.1

# random search ranges
HIDDEN_CHOICES = (1, 2, 3)
UNITS_RANGE = (5, 50)
DROPOUT_RANGE = (0.1, 0.5)
LR_RANGE = (1e-3, 0.3)


@dataclass
class MlpConfig:
    hidden_layers: int = 1
    units: int = 32
    dropout: float = 0.2
    learning_rate: float = 0.01
    input_dim: int = 0
    output_dim: int = NUM_CLASSES

    def __post_init__(self):
        if self.hidden_layers < 1:
            raise ValueError("need at least one hidden layer")
        if self.units < 1:
            raise ValueError("need at least one unit per layer")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.output_dim != NUM_CLASSES:
            raise ValueError("the classifier has exactly three outputs")


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(probs: np.ndarray, y: np.ndarray) -> float:
    p = probs[np.arange(len(y)), y]
    return float(-np.mean(np.log(np.maximum(p, 1e-300))))


class MlpModel:
    """Parameters plus forward/backward passes; ``hidden=[]`` gives softmax regression."""

    PARAM_KEYS = ("W", "b", "gamma", "beta")

    def __init__(self, input_dim: int, hidden: list[int], output_dim: int = NUM_CLASSES,
                 dropout: float = 0.0, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.input_dim = input_dim
        self.dropout = dropout
        self.layers = []
        fan_in = input_dim
        for units in hidden:
            self.layers.append({
                "W": rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_in, units)),
                "b": np.zeros(units),
                "gamma": np.ones(units),
                "beta": np.zeros(units),
                "mean": np.zeros(units),
                "var": np.ones(units),
            })
            fan_in = units
        self.layers.append({
            "W": rng.normal(0.0, math.sqrt(1.0 / fan_in), size=(fan_in, output_dim)),
            "b": np.zeros(output_dim),
        })
        self.mode = "eval"

    @classmethod
    def from_config(cls, config: MlpConfig, rng=None) -> "MlpModel":
        return cls(config.input_dim, [config.units] * config.hidden_layers, config.output_dim,
                   config.dropout, rng)

    @property
    def hidden(self):
        return self.layers[:-1]

    def parameters(self) -> list[tuple[int, str]]:
        return [(i, k) for i, layer in enumerate(self.layers) for k in self.PARAM_KEYS if k in layer]

    def num_parameters(self) -> int:
        return sum(self.layers[i][k].size for i, k in self.parameters())

    # -------------------------------------------------------------- forward

    def forward(self, X, mode: str | None = None, rng=None, keep: bool = False):
        mode = mode or self.mode
        h = np.asarray(X, dtype=float)
        if h.ndim != 2 or h.shape[1] != self.input_dim:
            raise ValueError(f"expected batch of width {self.input_dim}, got shape {h.shape}")
        if h.shape[0] == 0:
            raise ValueError("empty batch")
        caches = []
        for layer in self.hidden:
            z = h @ layer["W"] + layer["b"]
            a = np.maximum(z, 0.0)
            if mode == "train":
                mu = a.mean(axis=0)
                var = a.var(axis=0)
                if keep:
                    layer["mean"] = (1 - BN_MOMENTUM) * layer["mean"] + BN_MOMENTUM * mu
                    n = a.shape[0]
                    unbiased = var * n / (n - 1) if n > 1 else var
                    layer["var"] = (1 - BN_MOMENTUM) * layer["var"] + BN_MOMENTUM * unbiased
            else:
                mu, var = layer["mean"], layer["var"]
            inv = 1.0 / np.sqrt(var + BN_EPS)
            ahat = (a - mu) * inv
            out = layer["gamma"] * ahat + layer["beta"]
            mask = None
            if mode == "train" and self.dropout > 0:
                rng = rng if rng is not None else np.random.default_rng()
                mask = (rng.random(out.shape) >= self.dropout) / (1.0 - self.dropout)
                out = out * mask
            caches.append((h, z, ahat, inv, mask))
            h = out
        last = self.layers[-1]
        logits = h @ last["W"] + last["b"]
        probs = softmax(logits)
        self._cache = (caches, h, probs)
        return probs

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        probs = self.forward(X[None, :] if single else X, mode="eval")
        return probs[0] if single else probs

    # ------------------------------------------------------------- backward

    def backward(self, y: np.ndarray) -> dict:
        """Gradients of the mean cross-entropy of the last forward pass."""
        caches, h, probs = self._cache
        n = len(y)
        grads = {}
        d = probs.copy()
        d[np.arange(n), y] -= 1.0
        d /= n
        last = len(self.layers) - 1
        grads[(last, "W")] = h.T @ d
        grads[(last, "b")] = d.sum(axis=0)
        dh = d @ self.layers[-1]["W"].T
        for i in range(last - 1, -1, -1):
            layer = self.layers[i]
            x_in, z, ahat, inv, mask = caches[i]
            if mask is not None:
                dh = dh * mask
            grads[(i, "gamma")] = (dh * ahat).sum(axis=0)
            grads[(i, "beta")] = dh.sum(axis=0)
            dahat = dh * layer["gamma"]
            if self.mode_of_cache == "train":
                m = dahat.shape[0]
                da = inv / m * (m * dahat - dahat.sum(axis=0) - ahat * (dahat * ahat).sum(axis=0))
            else:
                da = dahat * inv
            dz = da * (z > 0)
            grads[(i, "W")] = x_in.T @ dz
            grads[(i, "b")] = dz.sum(axis=0)
            dh = dz @ layer["W"].T
        return grads

    def loss_and_grads(self, X, y, mode: str = "train", rng=None, keep: bool = False):
        self.mode_of_cache = mode
        probs = self.forward(X, mode=mode, rng=rng, keep=keep)
        return cross_entropy(probs, y), self.backward(y)

    # ----------------------------------------------------------- persistence

    def state(self) -> list[dict]:
        return copy.deepcopy(self.layers)

    def load_state(self, layers: list[dict]):
        self.layers = copy.deepcopy(layers)

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "dropout": self.dropout,
            "layers": [{k: v.tolist() for k, v in layer.items()} for layer in self.layers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpModel":
        layers = [{k: np.array(v, dtype=float) for k, v in layer.items()} for layer in d["layers"]]
        hidden = [layer["W"].shape[1] for layer in layers[:-1]]
        model = cls(int(d["input_dim"]), hidden, layers[-1]["W"].shape[1], float(d["dropout"]))
        model.layers = layers
        return model


class Adam:
    def __init__(self, model: MlpModel, lr: float):
        self.lr = lr
        self.t = 0
        self.m = {key: np.zeros_like(model.layers[key[0]][key[1]]) for key in model.parameters()}
        self.v = {key: np.zeros_like(val) for key, val in self.m.items()}

    def step(self, model: MlpModel, grads: dict):
        b1, b2 = ADAM_BETAS
        self.t += 1
        for key, g in grads.items():
            self.m[key] = b1 * self.m[key] + (1 - b1) * g
            self.v[key] = b2 * self.v[key] + (1 - b2) * g * g
            mhat = self.m[key] / (1 - b1 ** self.t)
            vhat = self.v[key] / (1 - b2 ** self.t)
            model.layers[key[0]][key[1]] -= self.lr * mhat / (np.sqrt(vhat) + ADAM_EPS)


# ------------------------------------------------------------------- training


@dataclass
class TrainReport:
    history: list = field(default_factory=list)  # per epoch: train/val loss and accuracy, lr
    best_epoch: int = -1
    best_val_loss: float = math.inf
    stop_reason: str = ""
    test_accuracy: float | None = None
    baseline_accuracy: float | None = None
    test_loss: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def accuracy(model: MlpModel, X, y) -> float:
    return float(np.mean(model.predict_proba(X).argmax(axis=1) == y))


def evaluate(model: MlpModel, X, y) -> tuple[float, float]:
    probs = model.predict_proba(X)
    return cross_entropy(probs, y), float(np.mean(probs.argmax(axis=1) == y))


def majority_baseline(y_train, y_test) -> float:
    counts = np.bincount(np.asarray(y_train), minlength=NUM_CLASSES)
    return float(np.mean(np.asarray(y_test) == int(np.argmax(counts))))


def train(train_xy, val_xy, config: MlpConfig, seed: int = 0, test_xy=None,
          max_epochs: int = MAX_EPOCHS, patience: int = PATIENCE, batch_size: int = BATCH_SIZE):
    """Mini-batch Adam with one learning-rate decay and early stopping on validation loss."""
    X, y = (np.asarray(a) for a in train_xy)
    Xv, yv = (np.asarray(a) for a in val_xy)
    if len(X) == 0 or len(Xv) == 0:
        raise ValueError("training and validation splits must be nonempty")
    if config.input_dim != X.shape[1]:
        config = MlpConfig(**{**asdict(config), "input_dim": X.shape[1]})
    rng = np.random.default_rng(seed)
    model = MlpModel.from_config(config, rng)
    opt = Adam(model, config.learning_rate)
    report = TrainReport()
    best_state = model.state()
    since, decayed = 0, False
    n = len(X)
    bs = min(batch_size, n)
    for epoch in range(max_epochs):
        perm = rng.permutation(n)
        for start in range(0, n, bs):
            idx = perm[start:start + bs]
            if len(idx) < 2:  # batch norm needs two rows
                continue
            _, grads = model.loss_and_grads(X[idx], y[idx], mode="train", rng=rng, keep=True)
            opt.step(model, grads)
        tr_loss, tr_acc = evaluate(model, X, y)
        va_loss, va_acc = evaluate(model, Xv, yv)
        report.history.append({"epoch": epoch, "train_loss": tr_loss, "train_acc": tr_acc,
                               "val_loss": va_loss, "val_acc": va_acc, "lr": opt.lr})
        if va_loss < report.best_val_loss:
            report.best_val_loss = va_loss
            report.best_epoch = epoch
            best_state = model.state()
            since = 0
        else:
            since += 1
        if since >= patience:
            if decayed:
                report.stop_reason = "no-improvement"
                break
            opt.lr *= LR_DECAY
            decayed = True
            since = 0
    else:
        report.stop_reason = "max-epochs"
    model.load_state(best_state)
    if test_xy is not None:
        Xt, yt = (np.asarray(a) for a in test_xy)
        report.test_loss, report.test_accuracy = evaluate(model, Xt, yt)
        report.baseline_accuracy = majority_baseline(y, yt)
    return model, report


def grad_check(model: MlpModel, X, y, step: float = 1e-5) -> float:
    """Max over parameter arrays of ||analytic - numeric|| / (||analytic|| + ||numeric||).

    Uses train-mode batch statistics with dropout switched off, so every layer
    type contributes.
    """
    saved = model.dropout
    model.dropout = 0.0
    try:
        _, grads = model.loss_and_grads(X, y, mode="train")
        worst = 0.0
        for key in model.parameters():
            P = model.layers[key[0]][key[1]]
            num = np.zeros_like(P)
            for idx in np.ndindex(P.shape):
                old = P[idx]
                P[idx] = old + step
                up = cross_entropy(model.forward(X, mode="train"), y)
                P[idx] = old - step
                down = cross_entropy(model.forward(X, mode="train"), y)
                P[idx] = old
                num[idx] = (up - down) / (2 * step)
            ana = grads[key]
            denom = np.linalg.norm(ana) + np.linalg.norm(num)
            if denom > 0:
                worst = max(worst, float(np.linalg.norm(ana - num) / denom))
        return worst
    finally:
        model.dropout = saved


def sample_config(rng, input_dim: int) -> MlpConfig:
    lo, hi = math.log(LR_RANGE[0]), math.log(LR_RANGE[1])
    return MlpConfig(
        hidden_layers=int(rng.choice(HIDDEN_CHOICES)),
        units=int(rng.integers(UNITS_RANGE[0], UNITS_RANGE[1] + 1)),
        dropout=float(rng.uniform(*DROPOUT_RANGE)),
        learning_rate=float(math.exp(rng.uniform(lo, hi))),
        input_dim=input_dim,
    )


@dataclass
class SearchResult:
    config: MlpConfig
    model: MlpModel
    report: TrainReport
    trials: list


def hyper_search(train_xy, val_xy, trials: int, seed: int = 0, test_xy=None, **train_kwargs) -> SearchResult:
    """Random search; the winner minimizes (validation loss, trial index)."""
    if trials < 1:
        raise ValueError("need at least one trial")
    rng = np.random.default_rng(seed)
    input_dim = np.asarray(train_xy[0]).shape[1]
    best = None
    log_rows = []
    for t in range(trials):
        config = sample_config(rng, input_dim)
        model, report = train(train_xy, val_xy, config, seed=seed + 1000 * (t + 1), **train_kwargs)
        log_rows.append({"trial": t, "config": asdict(config), "val_loss": report.best_val_loss})
        log.info("trial %d: %s val_loss=%.4f", t, config, report.best_val_loss)
        if best is None or report.best_val_loss < best[0]:
            best = (report.best_val_loss, config, model, report)
    _, config, model, report = best
    if test_xy is not None:
        Xt, yt = (np.asarray(a) for a in test_xy)
        report.test_loss, report.test_accuracy = evaluate(model, Xt, yt)
        report.baseline_accuracy = majority_baseline(train_xy[1], yt)
    return SearchResult(config, model, report, log_rows)


# ---------------------------------------------------------------- model files


@dataclass
class TrainedPolicyModel:
    """An MLP bundled with the preprocessor that feeds it raw feature vectors."""

    config: MlpConfig
    preprocessor: Preprocessor
    model: MlpModel

    def predict_proba(self, raw) -> np.ndarray:
        return self.model.predict_proba(self.preprocessor.transform(raw))

    def to_dict(self) -> dict:
        return {"config": asdict(self.config), "preprocessor": self.preprocessor.to_dict(),
                **self.model.to_dict()}

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict()))
        return path

    @classmethod
    def load(cls, path) -> "TrainedPolicyModel":
        path = Path(path)
        try:
            d = json.loads(path.read_text())
            return cls(MlpConfig(**d["config"]), Preprocessor.from_dict(d["preprocessor"]),
                       MlpModel.from_dict(d))
        except (OSError, KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}: not a usable policy model ({exc})") from exc
