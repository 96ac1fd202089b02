import numpy as np
import pytest

from pricure_trainer.data import make_blobs, partition
from pricure_trainer.mlp import Mlp, TrainConfig, one_hot, train_mlp


class TestGradients:
    def test_analytic_matches_numeric(self):
        rng = np.random.default_rng(0)
        net = Mlp.init([4, 3, 2], rng)
        x = rng.normal(size=(5, 4))
        t = one_hot(np.array([0, 1, 0, 1, 1]), 2)
        before_w = [w.copy() for w in net.weights]
        before_b = [b.copy() for b in net.biases]

        def loss(ws):
            h = x
            for idx, (w, b) in enumerate(zip(ws, before_b)):
                h = h @ w + b
                if idx != len(ws) - 1:
                    h = np.maximum(h, 0.0)
            return 0.5 * np.mean(np.sum((h - t) ** 2, axis=1))

        net.sgd_step(x, t, lr=1.0)
        analytic = before_w[0] - net.weights[0]  # lr * grad with lr = 1
        eps = 1e-6
        i, j = 1, 2
        plus = [w.copy() for w in before_w]
        minus = [w.copy() for w in before_w]
        plus[0][i, j] += eps
        minus[0][i, j] -= eps
        numeric = (loss(plus) - loss(minus)) / (2 * eps)
        assert analytic[i, j] == pytest.approx(numeric, rel=1e-6)

    def test_relu_mask_blocks_gradient(self):
        rng = np.random.default_rng(1)
        net = Mlp.init([2, 2, 2], rng)
        # force the hidden layer fully inactive
        net.weights[0] = -np.ones((2, 2)) * 10
        net.biases[0] = -np.ones(2) * 10
        w_before = net.weights[0].copy()
        net.sgd_step(np.ones((3, 2)), one_hot(np.array([0, 1, 0]), 2), lr=0.1)
        assert np.array_equal(net.weights[0], w_before)


class TestTraining:
    def test_learns_separable_blobs(self):
        features, labels, _ = make_blobs(150, 3, seed=7)
        cfg = TrainConfig(learning_rate=0.01, epochs=60, batch_size=32, seed=7)
        net = train_mlp(features, labels, (16,), 3, cfg)
        assert net.accuracy(features, labels) > 0.97

    def test_deterministic_given_seed(self):
        features, labels, _ = make_blobs(40, 2, seed=3)
        cfg = TrainConfig(epochs=5, seed=11)
        a = train_mlp(features, labels, (4,), 2, cfg)
        b = train_mlp(features, labels, (4,), 2, cfg)
        assert all(np.array_equal(w1, w2) for w1, w2 in zip(a.weights, b.weights))

    def test_linear_model_supported(self):
        features, labels, _ = make_blobs(100, 2, seed=5)
        cfg = TrainConfig(learning_rate=0.05, epochs=40, seed=5)
        net = train_mlp(features, labels, (), 2, cfg)
        assert len(net.weights) == 1
        assert net.accuracy(features, labels) > 0.95


class TestPartition:
    def test_disjoint_and_complete(self):
        parts = partition(101, 7, np.random.default_rng(0))
        joined = np.concatenate(parts)
        assert sorted(joined.tolist()) == list(range(101))
