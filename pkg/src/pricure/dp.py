"""Differentially private aggregation of per-model score vectors.

The aggregator combines m reconstructed score vectors (majority vote over
per-model argmax labels, or a clipped score sum), perturbs each class total
with independent Laplace noise of scale sensitivity/epsilon, and releases
only the argmax.  A per-client ledger enforces a linear-composition budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

MODE_VOTE = "vote"
MODE_SCORE = "score"
MODE_NONE = "none"
_MODES = (MODE_VOTE, MODE_SCORE, MODE_NONE)


class DpError(Exception):
    pass


class BudgetExhaustedError(DpError):
    """The client's cumulative privacy budget hit its cap."""


@dataclass(frozen=True)
class PrivacyParams:
    epsilon: float = 0.05
    sensitivity: float = 1.0
    mode: str = MODE_VOTE
    clip: float | None = None  # required for score mode; scores clipped to [0, clip]

    def __post_init__(self):
        if self.mode not in _MODES:
            raise DpError(f"unknown aggregation mode {self.mode!r}")
        if self.mode != MODE_NONE and not self.epsilon > 0:
            raise DpError("epsilon must be positive")
        if not self.sensitivity > 0:
            raise DpError("sensitivity must be positive")
        if self.mode == MODE_SCORE and not (self.clip and self.clip > 0):
            raise DpError("score mode needs a positive clip bound")

    @property
    def noise_scale(self) -> float:
        return self.sensitivity / self.epsilon


@dataclass(frozen=True)
class NoisyAggregate:
    values: np.ndarray  # per-class noised totals
    label: int          # argmax, lowest index on ties


def sample_laplace(b: float, rng: np.random.Generator, size=None):
    """Inverse-CDF Laplace(0, b) draw: u ~ U(-1/2, 1/2), -b*sign(u)*ln(1-2|u|)."""
    if not b > 0:
        raise DpError("Laplace scale must be positive")
    u = rng.uniform(-0.5, 0.5, size=size)
    return -b * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def aggregate(score_vectors, params: PrivacyParams, rng: np.random.Generator) -> NoisyAggregate:
    """Noisy aggregation of m per-model score vectors into a released label."""
    scores = [np.asarray(v, dtype=np.float64) for v in score_vectors]
    if not scores:
        raise DpError("need at least one model output")
    width = scores[0].shape
    if any(v.shape != width or v.ndim != 1 for v in scores):
        raise DpError("score vectors must share one 1-D shape")
    if params.mode == MODE_VOTE:
        labels = [int(np.argmax(v)) for v in scores]
        totals = np.bincount(labels, minlength=len(scores[0])).astype(np.float64)
    else:
        stacked = np.vstack(scores)
        if params.mode == MODE_SCORE:
            stacked = np.clip(stacked, 0.0, params.clip)
        totals = stacked.sum(axis=0)
    if params.mode != MODE_NONE:
        totals = totals + sample_laplace(params.noise_scale, rng, size=totals.shape)
    return NoisyAggregate(totals, int(np.argmax(totals)))


def argmax_flip_probability(gap: float, b: float) -> float:
    """P(L1 - L2 > gap) for iid Laplace(0, b): the two-class upset chance."""
    if gap < 0:
        return 1.0 - argmax_flip_probability(-gap, b)
    return 0.25 * (2.0 + gap / b) * math.exp(-gap / b)


@dataclass
class BudgetLedger:
    """Linear-composition epsilon accounting per client."""

    cap: float | None = 1.0
    spent: dict = field(default_factory=dict)

    def spent_for(self, client: str) -> float:
        return self.spent.get(client, 0.0)

    def charge(self, client: str, params: PrivacyParams):
        cost = math.inf if params.mode == MODE_NONE else params.epsilon
        total = self.spent_for(client) + cost
        if self.cap is not None and total > self.cap + 1e-12:
            raise BudgetExhaustedError(
                f"client {client!r} would spend {total:g} over cap {self.cap:g}")
        self.spent[client] = total
