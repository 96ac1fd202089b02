"""Plain numpy multilayer perceptron trained with mini-batch SGD.

ReLU hidden layers, linear output, mean squared error against one-hot
targets. No softmax anywhere; the consumer only ranks the raw outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0


@dataclass
class Mlp:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def init(cls, dims: list[int], rng: np.random.Generator) -> "Mlp":
        """He-style uniform initialization."""
        weights, biases = [], []
        for din, dout in zip(dims[:-1], dims[1:]):
            bound = np.sqrt(6.0 / din)
            weights.append(rng.uniform(-bound, bound, size=(din, dout)))
            biases.append(np.zeros(dout))
        return cls(weights, biases)

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = x
        for idx, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if idx != len(self.weights) - 1:
                h = np.maximum(h, 0.0)
        return h

    def _forward_cached(self, x):
        acts = [x]
        h = x
        for idx, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if idx != len(self.weights) - 1:
                h = np.maximum(h, 0.0)
            acts.append(h)
        return acts

    def sgd_step(self, x: np.ndarray, targets: np.ndarray, lr: float):
        """One mini-batch step on 0.5 * mean squared error."""
        acts = self._forward_cached(x)
        n = x.shape[0]
        delta = (acts[-1] - targets) / n
        for idx in range(len(self.weights) - 1, -1, -1):
            a_in = acts[idx]
            grad_w = a_in.T @ delta
            grad_b = delta.sum(axis=0)
            if idx > 0:
                delta = (delta @ self.weights[idx].T) * (acts[idx] > 0)
            self.weights[idx] -= lr * grad_w
            self.biases[idx] -= lr * grad_b

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.forward(x), axis=1)

    def accuracy(self, x: np.ndarray, labels: np.ndarray) -> float:
        return float(np.mean(self.predict(x) == labels))


def one_hot(labels: np.ndarray, classes: int) -> np.ndarray:
    out = np.zeros((len(labels), classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def train_mlp(features: np.ndarray, labels: np.ndarray, hidden: tuple[int, ...],
              classes: int, cfg: TrainConfig,
              progress=None) -> Mlp:
    rng = np.random.default_rng(cfg.seed)
    dims = [features.shape[1], *hidden, classes]
    net = Mlp.init(dims, rng)
    targets = one_hot(labels, classes)
    n = len(labels)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            net.sgd_step(features[idx], targets[idx], cfg.learning_rate)
        if progress is not None:
            progress(epoch, net)
    return net
