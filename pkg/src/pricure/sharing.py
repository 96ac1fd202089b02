"""Two-party additive secret sharing and dealer-assisted share arithmetic.

A secret tensor x is held as two uniform-looking tensors with
x = (x_a + x_b) mod q.  Linear operations are local; share-times-share
products use one-time multiplication triples (q1, q2, q3 = q1*q2), fixed-point
rescaling uses dealer-issued truncation material, and ReLU is realized by
blinded sign retrieval through the dealer.

Interactive operations are written from the point of view of one worker and
exchange opened values with the peer through an ``ExchangeChannel``; both
workers must call them in the same order.
"""

from __future__ import annotations

import queue
import threading
from dataclasses import dataclass, field

import numpy as np

from .ring import RingModulus

HOLDER_A = "A"
HOLDER_B = "B"

# Dealer blinds for sign retrieval are positive multiples of the fixed-point
# scale, drawn from [1, 2^20] * scale; keeps r*x inside the centered range for
# any post-truncation activation value.
_BLIND_MAX = 1 << 20


class ProtocolError(Exception):
    """A party broke the share-level protocol contract."""


class TripleReuseError(ProtocolError):
    """One-time dealer material was consumed twice."""


class TruncationRangeError(ProtocolError):
    """Truncation input was outside the guaranteed-exact range."""


@dataclass
class AdditiveShare:
    """One worker's additive share of a secret ring tensor."""

    holder: str
    values: np.ndarray
    modulus: RingModulus
    session: str = ""

    def __post_init__(self):
        if self.holder not in (HOLDER_A, HOLDER_B):
            raise ProtocolError(f"unknown holder {self.holder!r}")
        self.values = self.modulus.as_array(self.values)

    @property
    def shape(self):
        return self.values.shape


class ExchangeChannel:
    """Symmetric worker-to-worker opening of public values."""

    def exchange(self, context: str, arrays: list[np.ndarray]) -> list[np.ndarray]:
        raise NotImplementedError


class SignOracle:
    """Dealer-side retrieval of the sign bit of an opened blinded value."""

    def sign_query(self, context: str, part: np.ndarray) -> np.ndarray:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# Local (communication-free) share algebra
# ---------------------------------------------------------------------------

def split_secret(values, modulus: RingModulus, rng: np.random.Generator,
                 session: str = "") -> tuple[AdditiveShare, AdditiveShare]:
    """Split a secret tensor into a uniform share pair."""
    values = modulus.as_array(values)
    part_a = modulus.uniform(rng, values.shape)
    part_b = modulus.sub(values, part_a)
    return (AdditiveShare(HOLDER_A, part_a, modulus, session),
            AdditiveShare(HOLDER_B, part_b, modulus, session))


def _check_pairing(a: AdditiveShare, b: AdditiveShare):
    if {a.holder, b.holder} != {HOLDER_A, HOLDER_B}:
        raise ProtocolError(f"need one share per worker, got {a.holder}/{b.holder}")
    if a.session != b.session:
        raise ProtocolError(f"session mismatch: {a.session!r} vs {b.session!r}")
    if a.shape != b.shape:
        raise ProtocolError(f"shape mismatch: {a.shape} vs {b.shape}")
    a.modulus._check(b.modulus)


def reconstruct(a: AdditiveShare, b: AdditiveShare) -> np.ndarray:
    _check_pairing(a, b)
    return a.modulus.add(a.values, b.values)


def _check_aligned(a: AdditiveShare, b: AdditiveShare):
    if a.holder != b.holder:
        raise ProtocolError(f"holder mismatch: {a.holder} vs {b.holder}")
    if a.session != b.session:
        raise ProtocolError(f"session mismatch: {a.session!r} vs {b.session!r}")
    if a.shape != b.shape:
        raise ProtocolError(f"shape mismatch: {a.shape} vs {b.shape}")
    a.modulus._check(b.modulus)


def add_shares(a: AdditiveShare, b: AdditiveShare) -> AdditiveShare:
    """Share of x+y, computed locally."""
    _check_aligned(a, b)
    return AdditiveShare(a.holder, a.modulus.add(a.values, b.values), a.modulus, a.session)


def sub_shares(a: AdditiveShare, b: AdditiveShare) -> AdditiveShare:
    _check_aligned(a, b)
    return AdditiveShare(a.holder, a.modulus.sub(a.values, b.values), a.modulus, a.session)


def mul_public(a: AdditiveShare, c: int) -> AdditiveShare:
    """Share of c*x for a public constant c."""
    return AdditiveShare(a.holder, a.modulus.scale_by(a.values, int(c)), a.modulus, a.session)


def add_public(a: AdditiveShare, t) -> AdditiveShare:
    """Share of x+t for a public tensor t; only worker A absorbs the constant."""
    if a.holder != HOLDER_A:
        return a
    t = a.modulus.reduce(np.asarray(t))
    return AdditiveShare(a.holder, a.modulus.add(a.values, np.broadcast_to(t, a.shape)),
                         a.modulus, a.session)


# ---------------------------------------------------------------------------
# Dealer material
# ---------------------------------------------------------------------------

@dataclass
class TripleShare:
    """One worker's share of a multiplication triple (q1, q2, q3=q1*q2)."""

    triple_id: str
    holder: str
    q1: np.ndarray
    q2: np.ndarray
    q3: np.ndarray
    matmul: bool = False
    _used: bool = field(default=False, repr=False)

    def consume(self):
        if self._used:
            raise TripleReuseError(f"triple {self.triple_id} already used")
        self._used = True


@dataclass
class TruncationShare:
    """One worker's part of exact fixed-point truncation material.

    Holds shares of a bounded mask r, of r' = r // scale, and of the carry
    table T[v] = [v < r mod scale]; the public offset shifts secrets
    nonnegative so plain integer division applies.
    """

    pair_id: str
    holder: str
    mask: np.ndarray
    shifted: np.ndarray
    carry_table: np.ndarray  # shape (*value_shape, scale)
    offset_units: int
    _used: bool = field(default=False, repr=False)

    def consume(self):
        if self._used:
            raise TripleReuseError(f"truncation pair {self.pair_id} already used")
        self._used = True


@dataclass
class ReluMaterial:
    """One worker's dealer material for one vector of ReLU activations."""

    relu_id: str
    holder: str
    blind: np.ndarray  # share of the positive blinding factor r
    mask_triple: TripleShare  # for m = r*x
    bit_triple: TripleShare   # for y = x*bit
    _used: bool = field(default=False, repr=False)

    def consume(self):
        if self._used:
            raise TripleReuseError(f"relu material {self.relu_id} already used")
        self._used = True


def make_triple(modulus: RingModulus, rng: np.random.Generator, triple_id: str,
                shape, right_shape=None, session: str = "") -> tuple[TripleShare, TripleShare]:
    """Dealer-side triple generation; matrix triple when right_shape is given."""
    is_matmul = right_shape is not None
    q1 = modulus.uniform(rng, shape)
    q2 = modulus.uniform(rng, right_shape if is_matmul else shape)
    q3 = modulus.matmul(q1, q2) if is_matmul else modulus.mul(q1, q2)
    parts = {}
    for name, secret in (("q1", q1), ("q2", q2), ("q3", q3)):
        a, b = split_secret(secret, modulus, rng, session)
        parts[name] = (a.values, b.values)
    return (TripleShare(triple_id, HOLDER_A, parts["q1"][0], parts["q2"][0], parts["q3"][0], is_matmul),
            TripleShare(triple_id, HOLDER_B, parts["q1"][1], parts["q2"][1], parts["q3"][1], is_matmul))


def make_truncation_pair(modulus: RingModulus, scale: int, rng: np.random.Generator,
                         pair_id: str, shape, session: str = "") -> tuple[TruncationShare, TruncationShare]:
    q, f = modulus.q, int(scale)
    offset_units = q // (8 * f)
    r = rng.integers(0, q // 2, size=shape, dtype=np.uint64)
    r_shift = r // np.uint64(f)
    r_low = (r % np.uint64(f)).astype(np.int64)
    table = (np.arange(f, dtype=np.int64) < r_low[..., None]).astype(np.uint64)
    mask_a, mask_b = split_secret(r, modulus, rng, session)
    shift_a, shift_b = split_secret(r_shift, modulus, rng, session)
    table_a, table_b = split_secret(table, modulus, rng, session)
    return (TruncationShare(pair_id, HOLDER_A, mask_a.values, shift_a.values, table_a.values, offset_units),
            TruncationShare(pair_id, HOLDER_B, mask_b.values, shift_b.values, table_b.values, offset_units))


def make_relu_material(modulus: RingModulus, scale: int, rng: np.random.Generator,
                       relu_id: str, shape, session: str = "") -> tuple[ReluMaterial, ReluMaterial]:
    blind = rng.integers(1, _BLIND_MAX + 1, size=shape, dtype=np.uint64) * np.uint64(scale)
    blind_a, blind_b = split_secret(blind, modulus, rng, session)
    mask_a, mask_b = make_triple(modulus, rng, relu_id + "/m", shape, session=session)
    bit_a, bit_b = make_triple(modulus, rng, relu_id + "/b", shape, session=session)
    return (ReluMaterial(relu_id, HOLDER_A, blind_a.values, mask_a, bit_a),
            ReluMaterial(relu_id, HOLDER_B, blind_b.values, mask_b, bit_b))


def sign_bits(modulus: RingModulus, opened: np.ndarray) -> np.ndarray:
    """DReLU of an opened value: 1 where the signed representative is >= 0."""
    return (modulus.centered(opened) >= 0).astype(np.uint64)


# ---------------------------------------------------------------------------
# Interactive operations (per-worker view)
# ---------------------------------------------------------------------------

def beaver_mul(x_sh: AdditiveShare, y_sh: AdditiveShare, triple: TripleShare,
               channel: ExchangeChannel) -> AdditiveShare:
    """Share of x*y (element-wise or matrix product, per the triple's kind).

    Workers open alpha = x - q1 and beta = y - q2; each computes
    q3 + alpha*q2 + q1*beta and worker A adds the public alpha*beta term.
    """
    if x_sh.holder != y_sh.holder:
        raise ProtocolError("beaver_mul operands must be held by the same worker")
    mod = x_sh.modulus
    triple.consume()
    if x_sh.shape != triple.q1.shape or y_sh.shape != triple.q2.shape:
        raise ProtocolError(
            f"triple {triple.triple_id} shape {triple.q1.shape}/{triple.q2.shape} "
            f"does not fit operands {x_sh.shape}/{y_sh.shape}")
    alpha_part = mod.sub(x_sh.values, triple.q1)
    beta_part = mod.sub(y_sh.values, triple.q2)
    theirs = channel.exchange(triple.triple_id, [alpha_part, beta_part])
    alpha = mod.add(alpha_part, theirs[0])
    beta = mod.add(beta_part, theirs[1])
    combine = mod.matmul if triple.matmul else mod.mul
    z = mod.add(triple.q3, mod.add(combine(alpha, triple.q2), combine(triple.q1, beta)))
    if x_sh.holder == HOLDER_A:
        z = mod.add(z, combine(alpha, beta))
    return AdditiveShare(x_sh.holder, z, mod, x_sh.session)


def truncate_shares(z_sh: AdditiveShare, pair: TruncationShare,
                    channel: ExchangeChannel, scale: int) -> AdditiveShare:
    """Share of floor(lift(z) / scale), exact.

    Requires |lift(z)| < offset_units * scale (about q/8).  The opened value
    z + offset + r reveals only a masked magnitude, never the secret.
    """
    mod = z_sh.modulus
    f = np.uint64(scale)
    pair.consume()
    if z_sh.shape != pair.mask.shape:
        raise ProtocolError(f"truncation pair {pair.pair_id} shape mismatch")
    offset = pair.offset_units * int(scale)
    w_part = z_sh.values
    if z_sh.holder == HOLDER_A:
        w_part = mod.add(w_part, mod.reduce(np.uint64(offset)))
    c_part = mod.add(w_part, pair.mask)
    theirs = channel.exchange(pair.pair_id, [c_part])
    c = mod.add(c_part, theirs[0])
    # c = lift(z) + offset + r with 0 <= r < q/2; anything at or past
    # q/2 + 2*offset proves the precondition was violated.
    if np.any(c >= np.uint64(mod.q // 2 + 2 * offset)):
        raise TruncationRangeError(
            f"truncation input outside guaranteed range (pair {pair.pair_id})")
    t = c // f
    low = (c % f).astype(np.int64)
    carry = np.take_along_axis(pair.carry_table, low[..., None], axis=-1)[..., 0]
    result = mod.sub(mod.neg(pair.shifted), carry)
    if z_sh.holder == HOLDER_A:
        public = mod.sub(mod.reduce(t.astype(object)), mod.reduce(np.uint64(pair.offset_units)))
        result = mod.add(result, public)
    return AdditiveShare(z_sh.holder, result, mod, z_sh.session)


def relu_shares(x_sh: AdditiveShare, material: ReluMaterial, dealer: SignOracle,
                channel: ExchangeChannel) -> AdditiveShare:
    """Share of ReLU(lift(x)) re-encoded, exact.

    Blinds x by a dealer-known positive factor, lets the dealer recover only
    the sign bit of the product, and multiplies x by the returned bit shares.
    """
    material.consume()
    blind_sh = AdditiveShare(x_sh.holder, material.blind, x_sh.modulus, x_sh.session)
    m_sh = beaver_mul(x_sh, blind_sh, material.mask_triple, channel)
    bit_values = dealer.sign_query(material.relu_id, m_sh.values)
    bit_sh = AdditiveShare(x_sh.holder, bit_values, x_sh.modulus, x_sh.session)
    return beaver_mul(x_sh, bit_sh, material.bit_triple, channel)


# ---------------------------------------------------------------------------
# In-process channel and dealer, for single-process runs and tests
# ---------------------------------------------------------------------------

class LocalChannel(ExchangeChannel):
    """Queue-backed duplex channel between two worker threads."""

    def __init__(self, inbox: queue.Queue, outbox: queue.Queue, timeout: float = 30.0):
        self._inbox = inbox
        self._outbox = outbox
        self._timeout = timeout

    def exchange(self, context, arrays):
        self._outbox.put((context, arrays))
        try:
            peer_context, peer_arrays = self._inbox.get(timeout=self._timeout)
        except queue.Empty:
            raise ProtocolError(f"peer silent during open of {context!r}") from None
        if peer_context != context:
            raise ProtocolError(f"peer desync: opened {peer_context!r}, expected {context!r}")
        return peer_arrays


def local_channel_pair(timeout: float = 30.0) -> tuple[LocalChannel, LocalChannel]:
    ab: queue.Queue = queue.Queue()
    ba: queue.Queue = queue.Queue()
    return LocalChannel(ba, ab, timeout), LocalChannel(ab, ba, timeout)


class LocalSignDealer(SignOracle):
    """In-process dealer endpoint pairing sign queries from both workers."""

    def __init__(self, modulus: RingModulus, rng: np.random.Generator):
        self._modulus = modulus
        self._rng = rng
        self._lock = threading.Condition()
        self._pending: dict[str, np.ndarray] = {}
        self._replies: dict[str, list[np.ndarray]] = {}

    def sign_query(self, context, part):
        with self._lock:
            if context in self._pending:
                opened = self._modulus.add(self._pending.pop(context), part)
                bits = sign_bits(self._modulus, opened)
                first, second = split_secret(bits, self._modulus, self._rng)
                self._replies[context] = [first.values]
                self._lock.notify_all()
                return second.values
            self._pending[context] = part
            while context not in self._replies:
                if not self._lock.wait(timeout=30.0):
                    raise ProtocolError(f"dealer sign query {context!r} timed out")
            return self._replies.pop(context)[0]
