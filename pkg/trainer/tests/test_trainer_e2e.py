"""End-to-end: trained and exported models consumed by the inference side.

The MNIST criterion needs the real dataset; this sandbox has no network
access, so that test runs only when a local cache directory is configured
and is skipped (with the reason stated) otherwise.
"""

import numpy as np
import pytest

from pricure_trainer.data import (DataError, load_mnist, make_blobs, mnist_dir,
                                  partition)
from pricure_trainer.export import write_dataset, write_manifest, write_model
from pricure_trainer.mlp import TrainConfig, train_mlp

import pricure
from pricure import dp
from pricure.model import SyntheticDataset, forward_float
from pricure.protocol import SessionConfig
from pricure.session import run_session


def train_owner_models(features, labels, classes, owners, hidden, cfg_base, seed):
    shards = partition(len(labels), owners, np.random.default_rng(seed))
    nets = []
    for i, idx in enumerate(shards):
        nets.append(train_mlp(features[idx], labels[idx], hidden, classes,
                              TrainConfig(cfg_base.learning_rate, cfg_base.epochs,
                                          cfg_base.batch_size, seed=seed + i)))
    return nets


class TestSyntheticEndToEnd:
    def test_train_export_infer_pipeline(self, tmp_path):
        classes, owners = 3, 3
        features, labels, means = make_blobs(120, classes, seed=21)
        nets = train_owner_models(features, labels, classes, owners, (8,),
                                  TrainConfig(learning_rate=0.02, epochs=60,
                                              batch_size=32), seed=21)
        names = []
        for i, net in enumerate(nets):
            name = f"model_{i:03d}.json"
            write_model(net.weights, net.biases, tmp_path / name, owner=f"owner{i}")
            names.append(name)
        write_dataset(features, labels, tmp_path / "dataset.json", seed=21, means=means)
        write_manifest(tmp_path, names, seed=21)

        models = [pricure.load_model(tmp_path / n) for n in names]
        dataset = SyntheticDataset.load(tmp_path / "dataset.json")
        cfg = SessionConfig(owners=owners, network=models[0].spec(),
                            privacy=dp.PrivacyParams(epsilon=5.0))
        rounds = 12
        inputs = [dataset.features[i] for i in range(rounds)]
        truth = [int(dataset.labels[i]) for i in range(rounds)]
        report = run_session(cfg, models, inputs, seed=33)
        assert report.labels == report.reference_labels
        accuracy = np.mean([l == t for l, t in zip(report.labels, truth)])
        assert accuracy >= 0.9

    def test_quantization_costs_under_two_points(self):
        # [SECONDARY] two-decimal export must cost < 2 accuracy points
        classes = 3
        features, labels, _ = make_blobs(200, classes, seed=8)
        split = len(labels) * 3 // 4
        net = train_mlp(features[:split], labels[:split], (16,), classes,
                        TrainConfig(learning_rate=0.02, epochs=80, seed=8))
        float_acc = net.accuracy(features[split:], labels[split:])
        quant = pricure.ModelParameters(
            [np.trunc(np.round(w * 100, 6)) / 100 for w in net.weights],
            [np.trunc(np.round(b * 100, 6)) / 100 for b in net.biases])
        preds = [int(np.argmax(forward_float(quant, x))) for x in features[split:]]
        quant_acc = np.mean(np.array(preds) == labels[split:])
        assert float_acc >= 0.97
        assert quant_acc >= float_acc - 0.02
        print(f"PASS: quantization cost {100 * (float_acc - quant_acc):.2f} points "
              f"({float_acc:.4f} -> {quant_acc:.4f})")


needs_mnist = pytest.mark.skipif(
    mnist_dir() is None,
    reason="no MNIST cache available in this offline environment; "
           "set PRICURE_MNIST_DIR to a directory with the idx files to enable")


class TestMnistEndToEnd:
    @needs_mnist
    def test_fifty_owners_reach_85_percent(self, tmp_path):
        train_x, train_y, test_x, test_y = load_mnist()
        owners, per_owner = 50, 1200
        rng = np.random.default_rng(0)
        pick = rng.choice(len(train_y), size=owners * per_owner, replace=False)
        nets = train_owner_models(train_x[pick], train_y[pick], 10, owners, (128, 64),
                                  TrainConfig(learning_rate=0.001, epochs=100,
                                              batch_size=32), seed=0)
        names = []
        for i, net in enumerate(nets):
            name = f"model_{i:03d}.json"
            write_model(net.weights, net.biases, tmp_path / name, owner=f"owner{i}")
            names.append(name)
        models = [pricure.load_model(tmp_path / n) for n in names]
        cfg = SessionConfig(owners=owners, network=models[0].spec(),
                            privacy=dp.PrivacyParams(epsilon=0.05))
        n_eval = 100
        inputs = [test_x[i] for i in range(n_eval)]
        report = run_session(cfg, models, inputs, seed=1, deadline=600.0)
        accuracy = np.mean([l == int(t) for l, t in zip(report.labels, test_y[:n_eval])])
        assert accuracy >= 0.85
        print(f"PASS: MNIST 50-owner end to end accuracy {accuracy:.4f}")
