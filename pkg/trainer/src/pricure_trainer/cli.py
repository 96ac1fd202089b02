"""Train per-owner models and export them for the inference side."""

from __future__ import annotations

import json
from pathlib import Path

import click
import numpy as np

from . import export
from .data import DataError, load_mnist, make_blobs, mnist_dir, partition
from .mlp import TrainConfig, train_mlp


@click.group()
def main():
    """Owner-side training front end."""


@main.command()
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.option("--owners", type=click.IntRange(1), default=10, show_default=True)
@click.option("--source", type=click.Choice(["blobs", "mnist"]), default="blobs",
              show_default=True)
@click.option("--data", "data_dir", type=click.Path(file_okay=False, path_type=Path),
              default=None, help="MNIST cache directory (or set PRICURE_MNIST_DIR).")
@click.option("--hidden", default="16", show_default=True,
              help="Comma-separated hidden layer widths; empty for linear.")
@click.option("--classes", type=click.IntRange(2), default=4, show_default=True)
@click.option("--per-class", type=click.IntRange(1), default=100, show_default=True)
@click.option("--per-owner", type=click.IntRange(1), default=1200, show_default=True,
              help="Training samples per owner (mnist source).")
@click.option("--epochs", type=click.IntRange(1), default=100, show_default=True)
@click.option("--lr", type=float, default=0.001, show_default=True)
@click.option("--batch-size", type=click.IntRange(1), default=32, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def train(out, owners, source, data_dir, hidden, classes, per_class, per_owner,
          epochs, lr, batch_size, seed):
    """Train one model per owner on disjoint data shards and export them."""
    hidden_dims = tuple(int(h) for h in hidden.split(",") if h.strip())
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    if source == "mnist":
        try:
            train_x, train_y, test_x, test_y = load_mnist(data_dir or mnist_dir())
        except DataError as exc:
            raise click.ClickException(str(exc))
        classes = 10
        total = min(owners * per_owner, len(train_y))
        pick = rng.choice(len(train_y), size=total, replace=False)
        shards = partition(total, owners, rng)
        shard_data = [(train_x[pick[idx]], train_y[pick[idx]]) for idx in shards]
        eval_x, eval_y = test_x, test_y
        export.write_dataset(test_x[:200], test_y[:200], out / "dataset.json", seed)
    else:
        features, labels, means = make_blobs(per_class, classes, seed)
        shards = partition(len(labels), owners, rng)
        shard_data = [(features[idx], labels[idx]) for idx in shards]
        eval_x, eval_y = features, labels
        export.write_dataset(features, labels, out / "dataset.json", seed, means)
    names = []
    cfg = TrainConfig(learning_rate=lr, epochs=epochs, batch_size=batch_size)
    for i, (x, y) in enumerate(shard_data):
        net = train_mlp(x, y, hidden_dims, classes,
                        TrainConfig(cfg.learning_rate, cfg.epochs, cfg.batch_size,
                                    seed=seed + i))
        acc = net.accuracy(eval_x, eval_y)
        name = f"model_{i:03d}.json"
        note = (f"sgd lr={lr} epochs={epochs} batch={batch_size} "
                f"mse seed={seed + i}")
        export.write_model(net.weights, net.biases, out / name,
                           owner=f"owner{i}", note=note)
        names.append(name)
        click.echo(f"owner {i}: {len(y)} samples, eval accuracy {acc:.4f}")
    export.write_manifest(out, names, seed,
                          extra={"source": source, "hidden": list(hidden_dims),
                                 "classes": classes})
    click.echo(f"wrote {len(names)} models to {out}")


@main.command()
@click.option("--models", "models_dir", type=click.Path(exists=True, file_okay=False,
              path_type=Path), required=True)
@click.option("--data", "data_dir", type=click.Path(file_okay=False, path_type=Path),
              default=None)
def score(models_dir, data_dir):
    """Report each exported model's accuracy on the MNIST test split."""
    try:
        _, _, test_x, test_y = load_mnist(data_dir or mnist_dir())
    except DataError as exc:
        raise click.ClickException(str(exc))
    manifest = json.loads((models_dir / "manifest.json").read_text())
    for name in manifest["models"]:
        doc = json.loads((models_dir / name).read_text())
        weights = [np.array([[float(v) for v in row] for row in w]) for w in doc["weights"]]
        biases = [np.array([float(v) for v in b]) for b in doc["biases"]]
        h = test_x
        for idx, (w, b) in enumerate(zip(weights, biases)):
            h = h @ w + b
            if idx != len(weights) - 1:
                h = np.maximum(h, 0.0)
        acc = float(np.mean(np.argmax(h, axis=1) == test_y))
        click.echo(f"{name}: {acc:.4f}")


if __name__ == "__main__":
    main()
