"""Command line front end: fixtures, simulation, evaluation, benchmarks.

Exit codes: 0 success, 2 usage error, 3 protocol violation, 4 transport
failure, 5 privacy budget exhausted.
"""

from __future__ import annotations

import csv
import hashlib
import json
import platform
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import __version__, dp
from .model import (ModelError, ModelParameters, NetworkSpec, SyntheticDataset,
                    forward_fixed, forward_float, generate_fixture, load_model,
                    make_blobs, nearest_mean_model, partition_indices, save_model)
from .protocol import SessionConfig, owner_role
from .session import (build_parties, default_endpoints, reference_labels, run_session,
                      topology_edges, wire_party_tcp)
from .sharing import ProtocolError
from .transport import FrameParseError, TransportError

EXIT_PROTOCOL = 3
EXIT_TRANSPORT = 4
EXIT_BUDGET = 5


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _privacy(epsilon, mode, sensitivity, clip) -> dp.PrivacyParams:
    try:
        return dp.PrivacyParams(epsilon=epsilon, sensitivity=sensitivity,
                                mode=mode, clip=clip)
    except dp.DpError as exc:
        raise click.UsageError(str(exc))


def shard_models(dataset: SyntheticDataset, owners: int,
                 rng: np.random.Generator) -> list[ModelParameters]:
    """Disjoint shards of the dataset, one nearest-mean readout per owner."""
    shards = partition_indices(len(dataset.labels), owners, rng)
    models = []
    for i, idx in enumerate(shards):
        feats, labels = dataset.features[idx], dataset.labels[idx]
        means = np.vstack([
            feats[labels == c].mean(axis=0) if np.any(labels == c) else dataset.means[c]
            for c in range(dataset.classes)])
        models.append(nearest_mean_model(np.round(means, 2), owner=owner_role(i)))
    return models


@click.group()
@click.version_option(__version__, prog_name="pricure")
def main():
    """Collaborative inference over secret-shared models."""


@main.command()
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.option("--preset", type=click.Choice(["blobs", "mnist", "fmnist", "idc",
              "idc-small", "mimic", "mimic-small"]), default="blobs", show_default=True,
              help="blobs: trainable synthetic clusters; otherwise a named "
                   "architecture with seeded random parameters.")
@click.option("--owners", type=click.IntRange(1), default=10, show_default=True)
@click.option("--classes", type=click.IntRange(2), default=4, show_default=True)
@click.option("--per-class", type=click.IntRange(1), default=100, show_default=True)
@click.option("--dim", type=click.IntRange(1), default=8, show_default=True)
@click.option("--samples", type=click.IntRange(1), default=50, show_default=True,
              help="Dataset size for architecture presets.")
@click.option("--seed", type=int, default=0, show_default=True)
def fixtures(out, preset, owners, classes, per_class, dim, samples, seed):
    """Generate a dataset, one model file per owner, and a session config."""
    out.mkdir(parents=True, exist_ok=True)
    if preset == "blobs":
        dataset = make_blobs(per_class, classes, seed, dim=dim)
        models = shard_models(dataset, owners, np.random.default_rng(seed))
    else:
        spec = NetworkSpec.preset(preset)
        models = [generate_fixture(spec, seed + i) for i in range(owners)]
        rng = np.random.default_rng(seed)
        features = np.round(rng.uniform(0.0, 1.0, size=(samples, spec.input_dim)), 2)
        # label by the noiseless plaintext ensemble so the dataset is coherent
        votes = np.zeros((samples, spec.output_dim))
        for params in models:
            scores = np.stack([forward_float(params, x) for x in features])
            votes[np.arange(samples), np.argmax(scores, axis=1)] += 1
        dataset = SyntheticDataset(seed, features, np.argmax(votes, axis=1),
                                   np.zeros((spec.output_dim, spec.input_dim)))
    dataset.save(out / "dataset.json")
    names = []
    for i, params in enumerate(models):
        name = f"model_{i:03d}.json"
        save_model(params, out / name)
        names.append(name)
    cfg = SessionConfig(owners=owners, network=models[0].spec(),
                        privacy=dp.PrivacyParams())
    manifest = {"kind": "pricure-fixtures/1", "seed": seed, "owners": owners,
                "preset": preset, "dataset": "dataset.json", "models": names,
                "config": cfg.to_dict()}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    click.echo(f"wrote {len(models)} models and {len(dataset.labels)} samples to {out}")


def _load_fixtures(fixtures_dir: Path):
    manifest = json.loads((fixtures_dir / "manifest.json").read_text())
    dataset = SyntheticDataset.load(fixtures_dir / manifest["dataset"])
    models = [load_model(fixtures_dir / name) for name in manifest["models"]]
    return manifest, dataset, models


@main.command()
@click.option("--fixtures", "fixtures_dir", type=click.Path(exists=True, file_okay=False,
              path_type=Path), required=True)
@click.option("--rounds", type=click.IntRange(1), default=10, show_default=True)
@click.option("--epsilon", type=float, default=0.05, show_default=True)
@click.option("--mode", type=click.Choice([dp.MODE_VOTE, dp.MODE_SCORE, dp.MODE_NONE]),
              default=dp.MODE_VOTE, show_default=True)
@click.option("--sensitivity", type=float, default=1.0, show_default=True)
@click.option("--clip", type=float, default=None)
@click.option("--budget-cap", type=float, default=None)
@click.option("--transport", type=click.Choice(["loopback", "tcp"]), default="loopback",
              show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--manifest", "manifest_out", type=click.Path(dir_okay=False, path_type=Path),
              default=None, help="Write a JSON run manifest here.")
def simulate(fixtures_dir, rounds, epsilon, mode, sensitivity, clip, budget_cap,
             transport, seed, manifest_out):
    """Run the full protocol in-process and compare with the plaintext shadow."""
    try:
        _, dataset, models = _load_fixtures(fixtures_dir)
        spec = models[0].spec()
        for params in models:
            params.validate(spec)
        cfg = SessionConfig(owners=len(models), network=spec,
                            privacy=_privacy(epsilon, mode, sensitivity, clip),
                            budget_cap=budget_cap)
        inputs = [dataset.features[i % len(dataset.labels)] for i in range(rounds)]
        truth = [int(dataset.labels[i % len(dataset.labels)]) for i in range(rounds)]
        report = run_session(cfg, models, inputs, seed=seed, transport=transport)
    except dp.BudgetExhaustedError as exc:
        _fail(EXIT_BUDGET, str(exc))
    except (TransportError, FrameParseError) as exc:
        _fail(EXIT_TRANSPORT, str(exc))
    except (ProtocolError, RuntimeError) as exc:
        _fail(EXIT_PROTOCOL, str(exc))
    except ModelError as exc:
        raise click.UsageError(str(exc))
    answered = [(l, t) for l, t in zip(report.labels, truth) if l is not None]
    accuracy = (sum(l == t for l, t in answered) / len(answered)) if answered else 0.0
    click.echo(f"rounds={rounds} transport={transport} agreement={report.agreement:.3f} "
               f"accuracy={accuracy:.3f} refused={report.labels.count(None)} "
               f"wall={report.wall_seconds:.2f}s")
    if manifest_out is not None:
        workers = [report.party_reports[r] for r in ("workerA", "workerB")]
        noiseless_cfg = SessionConfig(
            owners=cfg.owners, network=cfg.network,
            privacy=dp.PrivacyParams(epsilon=1.0, mode=dp.MODE_NONE),
            modulus_q=cfg.modulus_q, scale=cfg.scale)
        noiseless = reference_labels(noiseless_cfg, models, inputs, seed)
        doc = {
            "kind": "pricure-run/1",
            "config": cfg.to_dict(),
            "config_hash": cfg.canonical_hash().hex(),
            "seed": seed,
            "transport": transport,
            "labels": report.labels,
            "reference_labels": report.reference_labels,
            "noiseless_labels": noiseless,
            "truth": truth,
            "agreement": report.agreement,
            "accuracy": accuracy,
            "wall_seconds": report.wall_seconds,
            "timings_ms": {
                "owner_share_mean": float(np.mean(
                    [r["share_ms"] for k, r in report.party_reports.items()
                     if k.startswith("owner")])),
                "worker_round_mean": float(np.mean(
                    [ms for w in workers for ms in w["round_compute_ms"]])),
                "aggregate_mean": float(np.mean(
                    report.party_reports["aggregator"]["aggregate_ms"] or [0.0])),
            },
        }
        manifest_out.write_text(json.dumps(doc, indent=1) + "\n")
        click.echo(f"manifest written to {manifest_out}")


@main.command()
@click.option("--fixtures", "fixtures_dir", type=click.Path(exists=True, file_okay=False,
              path_type=Path), required=True)
@click.option("--epsilons", default="0.001,0.01,0.05,0.1,0.5,1.0", show_default=True)
@click.option("--mode", type=click.Choice([dp.MODE_VOTE, dp.MODE_SCORE, dp.MODE_NONE]),
              default=dp.MODE_VOTE, show_default=True)
@click.option("--sensitivity", type=float, default=1.0, show_default=True)
@click.option("--clip", type=float, default=None)
@click.option("--trials", type=click.IntRange(1), default=20, show_default=True)
@click.option("--samples", type=click.IntRange(1), default=100, show_default=True)
@click.option("--owners", "owners_grid", default=None,
              help="Comma-separated owner counts; defaults to all fixture models.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_csv", type=click.Path(dir_okay=False, path_type=Path),
              required=True)
def eval(fixtures_dir, epsilons, mode, sensitivity, clip, trials, samples,
         owners_grid, seed, out_csv):
    """Accuracy versus epsilon over the fixture dataset (plaintext shadow path).

    Scores come from the exact fixed-point forward pass the protocol
    reproduces bit for bit; only the noisy aggregation is repeated per trial.
    """
    manifest, dataset, models = _load_fixtures(fixtures_dir)
    spec = models[0].spec()
    cfg_codec = SessionConfig(owners=len(models), network=spec,
                              privacy=dp.PrivacyParams(epsilon=1.0)).codec
    n = min(samples, len(dataset.labels))
    score_rows = []
    for i in range(n):
        x = dataset.features[i]
        score_rows.append([cfg_codec.decode(forward_fixed(p, x, cfg_codec))
                           for p in models])
    truth = dataset.labels[:n]
    if owners_grid:
        owner_counts = sorted({int(v) for v in owners_grid.split(",")})
        if owner_counts[-1] > len(models):
            raise click.UsageError(f"only {len(models)} fixture models available")
    else:
        owner_counts = [len(models)]
    rows = []
    for m in owner_counts:
        for text in epsilons.split(","):
            epsilon = float(text)
            params = _privacy(epsilon, mode, sensitivity, clip)
            rng = np.random.default_rng(
                np.random.SeedSequence([seed, m, int(epsilon * 1e6)]))
            correct = total = 0
            for _ in range(trials):
                for scores, label in zip(score_rows, truth):
                    agg = dp.aggregate(scores[:m], params, rng)
                    correct += int(agg.label == label)
                    total += 1
            rows.append({"epsilon": epsilon, "owners": m, "mode": mode,
                         "accuracy": correct / total, "trials": trials})
            click.echo(f"m={m} epsilon={epsilon:g} accuracy={correct / total:.4f}")
    with open(out_csv, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["epsilon", "owners", "mode",
                                                "accuracy", "trials"])
        writer.writeheader()
        writer.writerows(rows)
    click.echo(f"curve written to {out_csv}")


@main.command()
@click.option("--preset", type=click.Choice(["mnist", "fmnist", "idc", "idc-small",
              "mimic", "mimic-small"]), default="mnist", show_default=True)
@click.option("--owners", type=click.IntRange(1), default=1, show_default=True)
@click.option("--rounds", type=click.IntRange(1), default=3, show_default=True)
@click.option("--epsilon", type=float, default=0.05, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def bench(preset, owners, rounds, epsilon, seed):
    """Time the full protocol on a preset architecture with fixture weights."""
    spec = NetworkSpec.preset(preset)
    models = [generate_fixture(spec, seed + i) for i in range(owners)]
    rng = np.random.default_rng(seed)
    inputs = [np.round(rng.uniform(0.0, 1.0, spec.input_dim), 2) for _ in range(rounds)]
    cfg = SessionConfig(owners=owners, network=spec,
                        privacy=dp.PrivacyParams(epsilon=epsilon))
    report = run_session(cfg, models, inputs, seed=seed)
    share_ms = [r["share_ms"] for k, r in report.party_reports.items()
                if k.startswith("owner")]
    worker_ms = [ms for w in ("workerA", "workerB")
                 for ms in report.party_reports[w]["round_compute_ms"]]
    agg_ms = report.party_reports["aggregator"]["aggregate_ms"]
    click.echo(f"preset={preset} owners={owners} rounds={rounds} "
               f"host={platform.node()} ({platform.machine()}, "
               f"python {platform.python_version()})")
    click.echo(f"owner share:   {np.mean(share_ms):8.1f} ms")
    click.echo(f"worker round:  {np.mean(worker_ms):8.1f} ms")
    click.echo(f"aggregate:     {np.mean(agg_ms):8.1f} ms")
    click.echo(f"wall total:    {report.wall_seconds * 1e3:8.1f} ms "
               f"(agreement {report.agreement:.3f})")


@main.command()
@click.option("--role", required=True,
              help="workerA, workerB, dealer, aggregator, client, or ownerN.")
@click.option("--session", "session_file", type=click.Path(exists=True, dir_okay=False,
              path_type=Path), required=True,
              help="Shared session description JSON (see protocol.md).")
def party(role, session_file):
    """Run a single protocol role over TCP; one process per party."""
    doc = json.loads(session_file.read_text())
    cfg = SessionConfig.from_dict(doc["config"])
    endpoints = {r: (h, int(p)) for r, (h, p) in doc["endpoints"].items()}
    seed = int(doc.get("seed", 0))
    rounds = int(doc["rounds"])
    base = session_file.parent
    roles = {owner_role(i) for i in range(cfg.owners)}
    roles |= {a for a, _ in topology_edges(cfg.owners)} | {b for _, b in topology_edges(cfg.owners)}
    if role not in roles:
        raise click.UsageError(f"unknown role {role!r} for {cfg.owners} owners")
    fixtures_dir = base / doc["fixtures"]
    _, dataset, models = _load_fixtures(fixtures_dir)
    inputs = [dataset.features[i % len(dataset.labels)] for i in range(rounds)]
    parties = build_parties(cfg, models, inputs, seed,
                            deadline=float(doc.get("deadline", 60.0)))
    me = parties[role]
    session_id = hashlib.sha256(
        cfg.canonical_hash() + str(doc.get("session", "")).encode()).digest()[:16]
    try:
        wire_party_tcp(me, cfg, session_id, endpoints,
                       timeout=float(doc.get("deadline", 60.0)))
        me.run()
    except dp.BudgetExhaustedError as exc:
        _fail(EXIT_BUDGET, str(exc))
    except (TransportError, FrameParseError) as exc:
        _fail(EXIT_TRANSPORT, str(exc))
    except (ProtocolError, RuntimeError) as exc:
        _fail(EXIT_PROTOCOL, str(exc))
    click.echo(json.dumps({"role": role, "report": _jsonable(me.report)}))


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    return value


if __name__ == "__main__":
    main()
