"""Owner-side training: per-owner feed-forward models exported as
pricure-model/1 files plus a fixtures manifest the inference side consumes.

This package is intentionally independent of the inference package; the only
coupling is the on-disk file format.
"""

from .mlp import Mlp, TrainConfig, train_mlp
from .export import write_model, write_manifest

__version__ = "0.1.0"
__all__ = ["Mlp", "TrainConfig", "train_mlp", "write_model", "write_manifest"]
