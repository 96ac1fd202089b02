"""Writers for the pricure-model/1 file format and the fixtures manifest.

Deliberately re-implemented here rather than imported: the inference side is
a separate package and the JSON files are the only contract between them.
Parameters are stored as two-decimal strings, truncated toward zero.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

MODEL_FORMAT = "pricure-model/1"
MANIFEST_KIND = "pricure-fixtures/1"


def _decimal_string(value: float) -> str:
    units = int(np.trunc(np.round(value * 100, 6)))
    sign = "-" if units < 0 else ""
    units = abs(units)
    return f"{sign}{units // 100}.{units % 100:02d}"


def write_model(weights, biases, path, owner: str = "", note: str = ""):
    doc = {
        "format": MODEL_FORMAT,
        "owner": owner,
        "note": note,
        "weights": [[[_decimal_string(v) for v in row] for row in np.asarray(w)]
                    for w in weights],
        "biases": [[_decimal_string(v) for v in np.asarray(b)] for b in biases],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def write_dataset(features, labels, path, seed: int = 0, means=None):
    features = np.asarray(features)
    if means is None:
        means = np.vstack([features[np.asarray(labels) == c].mean(axis=0)
                           for c in range(int(np.max(labels)) + 1)])
    doc = {
        "seed": int(seed),
        "means": np.round(np.asarray(means), 2).tolist(),
        "features": [[_decimal_string(v) for v in row] for row in features],
        "labels": [int(v) for v in labels],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def write_manifest(out_dir, model_names: list[str], seed: int,
                   dataset_name: str = "dataset.json", extra: dict | None = None):
    manifest = {"kind": MANIFEST_KIND, "seed": seed, "owners": len(model_names),
                "dataset": dataset_name, "models": list(model_names)}
    manifest.update(extra or {})
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1) + "\n")
    return path
