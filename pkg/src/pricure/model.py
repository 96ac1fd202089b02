"""Feed-forward network definitions, reference forward passes, and fixtures.

Two reference inference paths live here: ``forward_float`` (plain float math)
and ``forward_fixed`` (the bit-level fixed-point reference that the secret-
shared protocol must match).  Model files are human-readable JSON with
two-decimal strings so fixed-point encoding is reproducible everywhere.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation

import numpy as np

from .ring import FixedPointCodec

MODEL_FORMAT = "pricure-model/1"

# Architectures used throughout; idc-small trades the wide hidden layer for a
# desk-scale run time while keeping the 50x50x3 input width.
PRESETS = {
    "mnist": (784, (128, 64), 10),
    "fmnist": (784, (128, 64), 10),
    "idc": (7500, (500,), 2),
    "idc-small": (7500, (50,), 2),
    "mimic": (30, (500,), 4),
    "mimic-small": (30, (50,), 4),
}


class ModelError(Exception):
    pass


class ModelParseError(ModelError):
    """Raised for malformed model files; carries file position context."""


@dataclass(frozen=True)
class NetworkSpec:
    """Layer dimensions of a feed-forward net: ReLU hidden, linear output."""

    input_dim: int
    hidden_dims: tuple[int, ...]
    output_dim: int

    def __post_init__(self):
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        if any(d < 1 for d in dims):
            raise ModelError(f"all dimensions must be >= 1, got {dims}")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        return list(zip(dims[:-1], dims[1:]))

    @property
    def num_layers(self) -> int:
        return len(self.hidden_dims) + 1

    @classmethod
    def preset(cls, name: str) -> "NetworkSpec":
        try:
            d, hidden, o = PRESETS[name]
        except KeyError:
            raise ModelError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
        return cls(d, tuple(hidden), o)


@dataclass
class ModelParameters:
    """Weight matrices and bias vectors, in float."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    owner: str = ""
    note: str = ""

    def validate(self, spec: NetworkSpec):
        if len(self.weights) != spec.num_layers or len(self.biases) != spec.num_layers:
            raise ModelError(
                f"expected {spec.num_layers} layers, got {len(self.weights)} weights "
                f"and {len(self.biases)} biases")
        for idx, (din, dout) in enumerate(spec.layer_dims):
            if self.weights[idx].shape != (din, dout):
                raise ModelError(f"weight {idx} shape {self.weights[idx].shape}, expected {(din, dout)}")
            if self.biases[idx].shape != (dout,):
                raise ModelError(f"bias {idx} shape {self.biases[idx].shape}, expected {(dout,)}")
        for arr in (*self.weights, *self.biases):
            if not np.all(np.isfinite(arr)):
                raise ModelError("non-finite parameter value")

    def spec(self) -> NetworkSpec:
        return NetworkSpec(self.weights[0].shape[0],
                           tuple(w.shape[0] for w in self.weights[1:]),
                           self.weights[-1].shape[1])


def forward_float(params: ModelParameters, x) -> np.ndarray:
    """Plain float forward pass: ReLU hidden layers, linear output."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.weights[0].shape[0],):
        raise ModelError(f"input shape {x.shape}, expected ({params.weights[0].shape[0]},)")
    h = x
    last = len(params.weights) - 1
    for idx, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if idx != last:
            h = np.maximum(h, 0.0)
    return h


def forward_fixed(params: ModelParameters, x, codec: FixedPointCodec) -> np.ndarray:
    """Fixed-point forward pass over the ring; the protocol's exact reference.

    Per layer: exact ring matmul on encoded values (scale f^2 products),
    bias aligned to scale f^2, one floor rescale back to scale f, then ReLU
    on the signed representative.  Returns the output vector as ring values
    at scale f.
    """
    mod = codec.modulus
    f = codec.scale
    h = np.atleast_2d(codec.encode(np.asarray(x, dtype=np.float64)))
    last = len(params.weights) - 1
    for idx, (w, b) in enumerate(zip(params.weights, params.biases)):
        w_enc = codec.encode(w)
        b_enc = codec.encode(b)
        acc = mod.add(mod.matmul(h, w_enc), mod.scale_by(b_enc, f))
        units = mod.centered(acc) // f  # floor rescale, once per layer
        if idx != last:
            units = np.maximum(units, 0)
        h = mod.from_signed(units)
    return h[0]


def generate_fixture(spec: NetworkSpec, seed) -> ModelParameters:
    """Deterministic seeded parameters: weights U[-0.5, 0.5], biases U[-0.1, 0.1]."""
    rng = np.random.default_rng(seed)
    weights = [rng.uniform(-0.5, 0.5, size=shape) for shape in spec.layer_dims]
    biases = [rng.uniform(-0.1, 0.1, size=(dout,)) for _, dout in spec.layer_dims]
    return ModelParameters(weights, biases, owner="fixture", note=f"seed={seed}")


# ---------------------------------------------------------------------------
# Model files
# ---------------------------------------------------------------------------

def _units_to_decimal(units: int) -> str:
    sign = "-" if units < 0 else ""
    units = abs(int(units))
    return f"{sign}{units // 100}.{units % 100:02d}"


def _quantize(arr: np.ndarray) -> np.ndarray:
    # Two-decimal truncation toward zero, matching the default codec.
    return np.trunc(np.round(arr * 100, 6)).astype(np.int64)


def save_model(params: ModelParameters, path):
    """Write a pricure-model/1 file with two-decimal parameter strings."""
    doc = {
        "format": MODEL_FORMAT,
        "owner": params.owner,
        "note": params.note,
        "weights": [[[_units_to_decimal(v) for v in row] for row in _quantize(w)]
                    for w in params.weights],
        "biases": [[_units_to_decimal(v) for v in _quantize(b)] for b in params.biases],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def _parse_decimal(text, where: str) -> float:
    try:
        units = int(Decimal(text) * 100)
    except (InvalidOperation, TypeError):
        raise ModelParseError(f"bad decimal {text!r} at {where}") from None
    if Decimal(text) * 100 != units:
        raise ModelParseError(f"more than two fractional digits at {where}: {text!r}")
    return units / 100.0


def load_model(path) -> ModelParameters:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelParseError(f"{path}: not a {MODEL_FORMAT} file")
    try:
        weights = [np.array([[_parse_decimal(v, f"weights[{i}]") for v in row] for row in w],
                            dtype=np.float64)
                   for i, w in enumerate(doc["weights"])]
        biases = [np.array([_parse_decimal(v, f"biases[{i}]") for v in b], dtype=np.float64)
                  for i, b in enumerate(doc["biases"])]
    except KeyError as exc:
        raise ModelParseError(f"{path}: missing field {exc}") from None
    if not weights or len(weights) != len(biases):
        raise ModelParseError(f"{path}: inconsistent layer lists")
    params = ModelParameters(weights, biases,
                             owner=str(doc.get("owner", "")), note=str(doc.get("note", "")))
    params.validate(params.spec())
    return params


# ---------------------------------------------------------------------------
# Synthetic dataset
# ---------------------------------------------------------------------------

@dataclass
class SyntheticDataset:
    """Seeded Gaussian blobs with one well-separated cluster per class."""

    seed: int
    features: np.ndarray  # (n, dim), values quantized to two decimals
    labels: np.ndarray    # (n,)
    means: np.ndarray     # (classes, dim)

    @property
    def classes(self) -> int:
        return self.means.shape[0]

    def save(self, path):
        doc = {
            "seed": int(self.seed),
            "means": self.means.tolist(),
            "features": [[_units_to_decimal(v) for v in row] for row in _quantize(self.features)],
            "labels": [int(v) for v in self.labels],
        }
        with open(path, "w") as fh:
            json.dump(doc, fh)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "SyntheticDataset":
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ModelParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        features = np.array([[_parse_decimal(v, "features") for v in row]
                             for row in doc["features"]], dtype=np.float64)
        return cls(int(doc["seed"]), features,
                   np.array(doc["labels"], dtype=np.int64),
                   np.array(doc["means"], dtype=np.float64))


def make_blobs(n_per_class: int, classes: int, seed, dim: int = 8,
               spread: float = 0.25, separation: float = 4.0) -> SyntheticDataset:
    """Deterministic balanced blob dataset; classes are linearly separable."""
    if classes < 2:
        raise ModelError("need at least 2 classes")
    rng = np.random.default_rng(seed)
    directions = rng.normal(size=(classes, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    # Push means apart until pairwise distances clear the requested separation.
    means = directions * separation
    for _ in range(64):
        gaps = np.linalg.norm(means[:, None] - means[None, :], axis=-1)
        np.fill_diagonal(gaps, np.inf)
        if gaps.min() >= separation:
            break
        means *= 1.2
    features = np.vstack([rng.normal(means[c], spread, size=(n_per_class, dim))
                          for c in range(classes)])
    labels = np.repeat(np.arange(classes), n_per_class)
    order = rng.permutation(len(labels))
    quantized = np.round(features[order], 2)
    return SyntheticDataset(seed if isinstance(seed, int) else 0,
                            quantized, labels[order], np.round(means, 2))


def nearest_mean_model(means: np.ndarray, owner: str = "") -> ModelParameters:
    """Linear readout whose argmax is the nearest class mean.

    score_c = 2 m_c . x - |m_c|^2 ranks classes by -|x - m_c|^2 up to a
    shared |x|^2 term, so a single linear layer realizes nearest-mean.
    """
    w = (2.0 * means.T).copy()
    b = -np.sum(means * means, axis=1)
    # Keep encoded scores well inside the two-decimal grid.
    return ModelParameters([w], [b], owner=owner, note="nearest-mean readout")


def partition_indices(n: int, m: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Split range(n) into m disjoint near-equal shards."""
    order = rng.permutation(n)
    return [np.sort(part) for part in np.array_split(order, m)]
