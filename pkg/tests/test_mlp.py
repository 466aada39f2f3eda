import math

import numpy as np
import pytest

from mipbb.features import Preprocessor
from mipbb.mlp import (DROPOUT_RANGE, LR_RANGE, UNITS_RANGE, MlpConfig, MlpModel, TrainedPolicyModel, accuracy,
                       cross_entropy, grad_check, hyper_search, majority_baseline, sample_config, softmax, train)


def _batch(rng, n=16, d=4):
    return rng.normal(size=(n, d)), rng.integers(0, 3, size=n)


def test_softmax_and_cross_entropy():
    p = softmax(np.array([[0.0, 0.0, 0.0], [1000.0, 0.0, 0.0]]))
    np.testing.assert_allclose(p[0], 1 / 3)
    np.testing.assert_allclose(p[1], [1, 0, 0])
    assert cross_entropy(np.array([[0.5, 0.25, 0.25]]), np.array([0])) == pytest.approx(math.log(2))


def test_zero_output_layer_is_uniform():
    model = MlpModel(4, [6])
    model.layers[-1]["W"][:] = 0
    np.testing.assert_allclose(model.predict_proba(np.ones((3, 4))), 1 / 3)


def test_eval_forward_is_deterministic():
    rng = np.random.default_rng(1)
    model = MlpModel(4, [8, 8], dropout=0.4, rng=rng)
    X, _ = _batch(rng)
    np.testing.assert_array_equal(model.forward(X, mode="eval"), model.forward(X, mode="eval"))


def test_train_mode_batch_norm_statistics():
    rng = np.random.default_rng(2)
    model = MlpModel(5, [7], rng=rng)
    X = rng.normal(size=(64, 5))
    model.forward(X, mode="train")
    ahat = model._cache[0][0][2]
    np.testing.assert_allclose(ahat.mean(axis=0), 0, atol=1e-5)
    live = ahat.std(axis=0) > 0.1  # units that are not dead after the ReLU
    np.testing.assert_allclose(ahat.var(axis=0)[live], 1, atol=1e-3)


@pytest.mark.parametrize("seed", range(4))
def test_grad_check_two_hidden_layers_with_batch_norm(seed):
    rng = np.random.default_rng(seed)
    model = MlpModel(4, [6, 5], dropout=0.3, rng=rng)
    assert model.num_parameters() <= 200
    X, y = _batch(rng)
    assert grad_check(model, X, y) < 1e-4
    assert model.dropout == 0.3


def test_softmax_regression_closed_form_gradient():
    rng = np.random.default_rng(5)
    model = MlpModel(3, [], rng=rng)
    X, y = _batch(rng, 10, 3)
    _, grads = model.loss_and_grads(X, y)
    P = softmax(X @ model.layers[0]["W"] + model.layers[0]["b"])
    Y = np.eye(3)[y]
    np.testing.assert_allclose(grads[(0, "W")], X.T @ (P - Y) / len(X), atol=1e-8)
    np.testing.assert_allclose(grads[(0, "b")], (P - Y).mean(axis=0), atol=1e-8)


def test_saturated_batch_has_tiny_gradients():
    model = MlpModel(3, [])
    X = np.eye(3)
    model.layers[0]["W"] = 200.0 * np.eye(3)
    _, grads = model.loss_and_grads(X, np.arange(3))
    assert max(np.abs(g).max() for g in grads.values()) < 1e-12


def _separable(rng, n=64):
    X = rng.normal(size=(n, 2))
    y = np.where(X[:, 0] > 0.3, 0, np.where(X[:, 1] > 0, 1, 2))
    X[:, 0] += np.where(y == 0, 1.0, -1.0)
    X[:, 1] += np.where(y == 1, 1.0, np.where(y == 2, -1.0, 0.0))
    return X, y


def test_overfits_separable_set():
    rng = np.random.default_rng(0)
    X, y = _separable(rng)
    config = MlpConfig(hidden_layers=1, units=32, dropout=0.1, learning_rate=0.05, input_dim=2)
    model, report = train((X, y), (X, y), config, seed=0, max_epochs=300, patience=300)
    assert accuracy(model, X, y) == 1.0
    assert report.best_epoch >= 0


def test_improving_validation_runs_all_epochs():
    rng = np.random.default_rng(3)
    X, y = _separable(rng, 40)
    config = MlpConfig(hidden_layers=1, units=5, dropout=0.1, learning_rate=1e-4, input_dim=2)
    _, report = train((X, y), (X, y), config, seed=0)
    assert len(report.history) == 200 and report.stop_reason == "max-epochs"


def test_early_stop_and_decay():
    rng = np.random.default_rng(4)
    X, y = rng.normal(size=(30, 2)), rng.integers(0, 3, 30)
    Xv, yv = rng.normal(size=(30, 2)), rng.integers(0, 3, 30)
    config = MlpConfig(hidden_layers=2, units=30, dropout=0.1, learning_rate=0.3, input_dim=2)
    _, report = train((X, y), (Xv, yv), config, seed=0, max_epochs=500, patience=5)
    assert report.stop_reason == "no-improvement"
    lrs = sorted({h["lr"] for h in report.history})
    assert lrs == pytest.approx([0.03, 0.3])


def test_empty_split_errors():
    config = MlpConfig(hidden_layers=1, units=5, dropout=0.1, learning_rate=0.01, input_dim=2)
    with pytest.raises(ValueError):
        train((np.zeros((0, 2)), np.zeros(0, int)), (np.zeros((2, 2)), np.zeros(2, int)), config)
    with pytest.raises(ValueError):
        MlpConfig(hidden_layers=0, units=5, dropout=0.1, learning_rate=0.01)


def test_sampled_configs_in_range():
    rng = np.random.default_rng(0)
    for _ in range(200):
        c = sample_config(rng, 10)
        assert c.hidden_layers in (1, 2, 3)
        assert UNITS_RANGE[0] <= c.units <= UNITS_RANGE[1]
        assert DROPOUT_RANGE[0] <= c.dropout <= DROPOUT_RANGE[1]
        assert LR_RANGE[0] <= c.learning_rate <= LR_RANGE[1]


def test_hyper_search_is_deterministic():
    rng = np.random.default_rng(1)
    X, y = _separable(rng, 60)
    one = hyper_search((X, y), (X, y), trials=1, seed=3, max_epochs=5)
    assert len(one.trials) == 1 and one.config == sample_config(np.random.default_rng(3), 2)
    a = hyper_search((X, y), (X, y), trials=3, seed=7, max_epochs=5)
    b = hyper_search((X, y), (X, y), trials=3, seed=7, max_epochs=5)
    assert a.config == b.config
    with pytest.raises(ValueError):
        hyper_search((X, y), (X, y), trials=0)


def test_majority_baseline():
    assert majority_baseline([0, 0, 1], [0, 1, 1, 0]) == 0.5


def test_trained_policy_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(20, 35))
    pre = Preprocessor.fit(X, categorical_mask=[False] * 35)
    config = MlpConfig(hidden_layers=2, units=6, dropout=0.2, learning_rate=0.01, input_dim=35)
    policy = TrainedPolicyModel(config, pre, MlpModel.from_config(config, rng))
    back = TrainedPolicyModel.load(policy.save(tmp_path / "m.json"))
    np.testing.assert_allclose(back.predict_proba(X), policy.predict_proba(X))
    (tmp_path / "bad.json").write_text("{}")
    with pytest.raises(ValueError):
        TrainedPolicyModel.load(tmp_path / "bad.json")
