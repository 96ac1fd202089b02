"""Party state machines and the choreography of a collaborative inference round.

Roles: model owners share encoded parameters with two non-colluding workers
and go offline; the client shares its input the same way; workers run the
layered computation over shares, assisted by the triple dealer, and send
partial output vectors to the aggregator; the aggregator reconstructs,
aggregates with Laplace noise, and returns a sealed label to the client.

Each party is a single-threaded loop over one mailbox; per-connection reader
threads only move frames into it.  Workers never reconstruct intermediate
values; the aggregator only ever sees final output shares.
"""

from __future__ import annotations

import hashlib
import json
import queue
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from . import dp, sealing, sharing
from .model import ModelParameters, NetworkSpec
from .ring import DEFAULT_PRIME, DEFAULT_SCALE, FixedPointCodec, RingModulus
from .sharing import (AdditiveShare, ExchangeChannel, HOLDER_A, HOLDER_B, ProtocolError,
                      ReluMaterial, SignOracle, TripleShare, TruncationShare,
                      add_shares, beaver_mul, make_relu_material, make_triple,
                      make_truncation_pair, mul_public, relu_shares, split_secret,
                      truncate_shares)
from .transport import (Connection, ConnectionClosed, MessageType, Reader, RecvTimeout,
                        pack_str, pack_tensor, pack_tensors, pack_u32, pack_u64)

WORKER_A = "workerA"
WORKER_B = "workerB"
DEALER = "dealer"
AGGREGATOR = "aggregator"
CLIENT = "client"


def owner_role(index: int) -> str:
    return f"owner{index}"


class ConfigMismatchError(ProtocolError):
    """Handshake found differing session configurations."""


class UnexpectedMessageError(ProtocolError):
    """A message type arrived that this role never accepts."""


class RoundTimeoutError(ProtocolError):
    """The aggregator's round deadline passed with partials missing."""

    def __init__(self, missing):
        self.missing = sorted(missing)
        super().__init__(f"round timed out waiting for {', '.join(self.missing)}")


ERR_BUDGET = 1
ERR_PROTOCOL = 2

# Message types each role is willing to receive; anything else is a
# protocol violation (in particular the aggregator never accepts shares).
_COMMON = {MessageType.HELLO, MessageType.HEARTBEAT, MessageType.ERROR, MessageType.BYE}
ALLOWED_TYPES = {
    WORKER_A: _COMMON | {MessageType.MODEL_SHARES, MessageType.INPUT_SHARES,
                         MessageType.MATERIAL_REPLY, MessageType.OPEN_VALUES,
                         MessageType.SIGN_REPLY},
    WORKER_B: _COMMON | {MessageType.MODEL_SHARES, MessageType.INPUT_SHARES,
                         MessageType.MATERIAL_REPLY, MessageType.OPEN_VALUES,
                         MessageType.SIGN_REPLY},
    DEALER: _COMMON | {MessageType.MATERIAL_REQUEST, MessageType.SIGN_REQUEST},
    AGGREGATOR: _COMMON | {MessageType.PARTIAL_RESULT, MessageType.CLIENT_KEY},
    CLIENT: _COMMON | {MessageType.SEALED_RESULT},
}


def allowed_types(role: str) -> set:
    if role.startswith("owner"):
        return set(_COMMON)
    return ALLOWED_TYPES[role]


# ---------------------------------------------------------------------------
# Session configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SessionConfig:
    """Parameters every party must agree on; hash-checked at handshake."""

    owners: int
    network: NetworkSpec
    privacy: dp.PrivacyParams
    modulus_q: int = DEFAULT_PRIME
    scale: int = DEFAULT_SCALE
    budget_cap: float | None = None

    @property
    def modulus(self) -> RingModulus:
        return RingModulus(self.modulus_q)

    @property
    def codec(self) -> FixedPointCodec:
        return FixedPointCodec(self.modulus, self.scale)

    def to_dict(self) -> dict:
        return {
            "modulus_q": self.modulus_q,
            "scale": self.scale,
            "owners": self.owners,
            "network": {"input_dim": self.network.input_dim,
                        "hidden_dims": list(self.network.hidden_dims),
                        "output_dim": self.network.output_dim},
            "privacy": {"epsilon": self.privacy.epsilon,
                        "sensitivity": self.privacy.sensitivity,
                        "mode": self.privacy.mode,
                        "clip": self.privacy.clip},
            "budget_cap": self.budget_cap,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SessionConfig":
        net = doc["network"]
        priv = doc["privacy"]
        return cls(owners=int(doc["owners"]),
                   network=NetworkSpec(int(net["input_dim"]),
                                       tuple(int(d) for d in net["hidden_dims"]),
                                       int(net["output_dim"])),
                   privacy=dp.PrivacyParams(epsilon=float(priv["epsilon"]),
                                            sensitivity=float(priv["sensitivity"]),
                                            mode=priv["mode"],
                                            clip=priv.get("clip")),
                   modulus_q=int(doc["modulus_q"]),
                   scale=int(doc["scale"]),
                   budget_cap=doc.get("budget_cap"))

    def canonical_hash(self) -> bytes:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).digest()


# ---------------------------------------------------------------------------
# Share-level protocol operations
# ---------------------------------------------------------------------------

@dataclass
class ModelShareBundle:
    """One worker's shares of a full model: [(W share, b share), ...]."""

    owner: int
    holder: str
    layers: list[tuple[np.ndarray, np.ndarray]]  # W (din,dout), b (1,dout)


def owner_share_model(params: ModelParameters, cfg: SessionConfig,
                      rng: np.random.Generator, owner: int,
                      session: str = "") -> tuple[ModelShareBundle, ModelShareBundle]:
    """Encode and split every parameter tensor; the owner can then go offline."""
    params.validate(cfg.network)
    codec, mod = cfg.codec, cfg.modulus
    layers_a, layers_b = [], []
    for w, b in zip(params.weights, params.biases):
        w_a, w_b = split_secret(codec.encode(w), mod, rng, session)
        b_a, b_b = split_secret(codec.encode(b).reshape(1, -1), mod, rng, session)
        layers_a.append((w_a.values, b_a.values))
        layers_b.append((w_b.values, b_b.values))
    return (ModelShareBundle(owner, HOLDER_A, layers_a),
            ModelShareBundle(owner, HOLDER_B, layers_b))


def client_share_input(x, cfg: SessionConfig, rng: np.random.Generator,
                       session: str = "") -> tuple[np.ndarray, np.ndarray]:
    """Encode the input vector and split into per-worker (1, d) share tensors."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (cfg.network.input_dim,):
        raise ProtocolError(f"input shape {x.shape}, expected ({cfg.network.input_dim},)")
    a, b = split_secret(cfg.codec.encode(x).reshape(1, -1), cfg.modulus, rng, session)
    return a.values, b.values


@dataclass
class LayerMaterials:
    """One worker's dealer material for one layer of one inference."""

    matmul: TripleShare
    trunc: TruncationShare
    relu: ReluMaterial | None = None


def make_round_materials(spec: NetworkSpec, modulus: RingModulus, scale: int,
                         rng: np.random.Generator, tag: str,
                         session: str = "") -> tuple[list[LayerMaterials], list[LayerMaterials]]:
    """Dealer-side generation of everything one inference round consumes."""
    out_a, out_b = [], []
    hidden = len(spec.hidden_dims)
    for j, (din, dout) in enumerate(spec.layer_dims):
        mm_a, mm_b = make_triple(modulus, rng, f"{tag}/l{j}/mm", (1, din), (din, dout),
                                 session=session)
        tr_a, tr_b = make_truncation_pair(modulus, scale, rng, f"{tag}/l{j}/tr", (1, dout),
                                          session=session)
        if j < hidden:
            re_a, re_b = make_relu_material(modulus, scale, rng, f"{tag}/l{j}/relu", (1, dout),
                                            session=session)
        else:
            re_a = re_b = None
        out_a.append(LayerMaterials(mm_a, tr_a, re_a))
        out_b.append(LayerMaterials(mm_b, tr_b, re_b))
    return out_a, out_b


def dealer_provision(spec: NetworkSpec, count: int, seed,
                     modulus: RingModulus | None = None,
                     scale: int = DEFAULT_SCALE) -> tuple[list, list]:
    """Offline inventory for `count` inference rounds, one list per worker."""
    modulus = modulus or RingModulus()
    inv_a, inv_b = [], []
    for rnd in range(count):
        rng = np.random.default_rng(np.random.SeedSequence([_seed_int(seed), rnd]))
        a, b = make_round_materials(spec, modulus, scale, rng, tag=f"r{rnd}")
        inv_a.append(a)
        inv_b.append(b)
    return inv_a, inv_b


def _seed_int(seed) -> int:
    if isinstance(seed, (int, np.integer)):
        return int(seed)
    digest = hashlib.sha256(str(seed).encode()).digest()
    return int.from_bytes(digest[:8], "little")


def infer_on_shares(bundle: ModelShareBundle, input_values: np.ndarray,
                    materials: list[LayerMaterials], cfg: SessionConfig,
                    channel: ExchangeChannel, dealer: SignOracle,
                    session: str = "") -> AdditiveShare:
    """One worker's pass over all layers; no intermediate is ever reconstructed."""
    mod, f = cfg.modulus, cfg.scale
    holder = bundle.holder
    x_sh = AdditiveShare(holder, input_values, mod, session)
    if len(materials) != len(bundle.layers):
        raise ProtocolError("material bundle does not cover every layer")
    for (w_vals, b_vals), mats in zip(bundle.layers, materials):
        w_sh = AdditiveShare(holder, w_vals, mod, session)
        b_sh = AdditiveShare(holder, b_vals, mod, session)
        acc = beaver_mul(x_sh, w_sh, mats.matmul, channel)       # scale f^2
        acc = add_shares(acc, mul_public(b_sh, f))               # align bias
        x_sh = truncate_shares(acc, mats.trunc, channel, f)      # back to scale f
        if mats.relu is not None:
            x_sh = relu_shares(x_sh, mats.relu, dealer, channel)
    return x_sh


# ---------------------------------------------------------------------------
# Message payload codecs
# ---------------------------------------------------------------------------

def encode_hello(role: str, config_hash: bytes) -> bytes:
    return pack_str(role) + config_hash


def decode_hello(payload: bytes) -> tuple[str, bytes]:
    r = Reader(payload)
    role = r.string()
    digest = r.take(32)
    r.done()
    return role, digest


def encode_model_shares(bundle: ModelShareBundle) -> bytes:
    out = [pack_u32(bundle.owner), pack_u32(len(bundle.layers))]
    for w, b in bundle.layers:
        out.append(pack_tensor(w))
        out.append(pack_tensor(b))
    return b"".join(out)


def decode_model_shares(payload: bytes, holder: str) -> ModelShareBundle:
    r = Reader(payload)
    owner = r.u32()
    layers = [(r.tensor(), r.tensor()) for _ in range(r.u32())]
    r.done()
    return ModelShareBundle(owner, holder, layers)


def encode_input_shares(rnd: int, values: np.ndarray) -> bytes:
    return pack_u64(rnd) + pack_tensor(values)


def decode_input_shares(payload: bytes) -> tuple[int, np.ndarray]:
    r = Reader(payload)
    rnd, values = r.u64(), r.tensor()
    r.done()
    return rnd, values


def encode_material_request(owner: int, rnd: int) -> bytes:
    return pack_u32(owner) + pack_u64(rnd)


def decode_material_request(payload: bytes) -> tuple[int, int]:
    r = Reader(payload)
    owner, rnd = r.u32(), r.u64()
    r.done()
    return owner, rnd


def _encode_triple(t: TripleShare) -> bytes:
    return (pack_str(t.triple_id) + bytes([1 if t.matmul else 0])
            + pack_tensor(t.q1) + pack_tensor(t.q2) + pack_tensor(t.q3))


def _decode_triple(r: Reader, holder: str) -> TripleShare:
    tid = r.string()
    is_matmul = r.take(1)[0] == 1
    return TripleShare(tid, holder, r.tensor(), r.tensor(), r.tensor(), is_matmul)


def encode_material_reply(owner: int, rnd: int, layers: list[LayerMaterials]) -> bytes:
    out = [pack_u32(owner), pack_u64(rnd), pack_u32(len(layers))]
    for lm in layers:
        out.append(_encode_triple(lm.matmul))
        out.append(pack_str(lm.trunc.pair_id) + pack_u64(lm.trunc.offset_units)
                   + pack_tensor(lm.trunc.mask) + pack_tensor(lm.trunc.shifted)
                   + pack_tensor(lm.trunc.carry_table))
        if lm.relu is None:
            out.append(b"\x00")
        else:
            out.append(b"\x01" + pack_str(lm.relu.relu_id) + pack_tensor(lm.relu.blind)
                       + _encode_triple(lm.relu.mask_triple) + _encode_triple(lm.relu.bit_triple))
    return b"".join(out)


def decode_material_reply(payload: bytes, holder: str) -> tuple[int, int, list[LayerMaterials]]:
    r = Reader(payload)
    owner, rnd = r.u32(), r.u64()
    layers = []
    for _ in range(r.u32()):
        mm = _decode_triple(r, holder)
        pair_id = r.string()
        offset = r.u64()
        trunc = TruncationShare(pair_id, holder, r.tensor(), r.tensor(), r.tensor(), offset)
        relu = None
        if r.take(1)[0] == 1:
            rid = r.string()
            blind = r.tensor()
            relu = ReluMaterial(rid, holder, blind, _decode_triple(r, holder),
                                _decode_triple(r, holder))
        layers.append(LayerMaterials(mm, trunc, relu))
    r.done()
    return owner, rnd, layers


def encode_open_values(context: str, arrays) -> bytes:
    return pack_str(context) + pack_tensors(arrays)


def decode_open_values(payload: bytes) -> tuple[str, list[np.ndarray]]:
    r = Reader(payload)
    context, arrays = r.string(), r.tensors()
    r.done()
    return context, arrays


def encode_sign(context: str, values: np.ndarray) -> bytes:
    return pack_str(context) + pack_tensor(values)


def decode_sign(payload: bytes) -> tuple[str, np.ndarray]:
    r = Reader(payload)
    context, values = r.string(), r.tensor()
    r.done()
    return context, values


def encode_partial_result(owner: int, rnd: int, values: np.ndarray) -> bytes:
    return pack_u32(owner) + pack_u64(rnd) + pack_tensor(values)


def decode_partial_result(payload: bytes) -> tuple[int, int, np.ndarray]:
    r = Reader(payload)
    owner, rnd, values = r.u32(), r.u64(), r.tensor()
    r.done()
    return owner, rnd, values


def encode_sealed(rnd: int, sealed: sealing.SealedResult) -> bytes:
    return (pack_u64(rnd) + sealed.ephemeral_pk + sealed.nonce
            + pack_u32(len(sealed.ciphertext)) + sealed.ciphertext)


def decode_sealed(payload: bytes) -> tuple[int, sealing.SealedResult]:
    r = Reader(payload)
    rnd = r.u64()
    eph, nonce = r.take(32), r.take(12)
    ct = r.take(r.u32())
    r.done()
    return rnd, sealing.SealedResult(eph, nonce, ct)


def encode_error(code: int, message: str) -> bytes:
    return pack_u32(code) + pack_str(message)


def decode_error(payload: bytes) -> tuple[int, str]:
    r = Reader(payload)
    code, message = r.u32(), r.string()
    r.done()
    return code, message


# ---------------------------------------------------------------------------
# Mailbox and links
# ---------------------------------------------------------------------------

@dataclass
class _Arrival:
    sender: str
    msg_type: MessageType
    payload: bytes


class Mailbox:
    """Single consumer queue with out-of-order buffering and role whitelist."""

    def __init__(self, role: str):
        self.role = role
        self._allowed = allowed_types(role)
        self._queue: queue.Queue = queue.Queue()
        self._pending: list[_Arrival] = []

    def deliver(self, sender: str, msg_type, payload: bytes):
        self._queue.put(_Arrival(sender, MessageType(msg_type), payload))

    def deliver_failure(self, exc: Exception):
        self._queue.put(exc)

    def recv(self, sender: str | None = None, msg_type=None,
             timeout: float | None = 30.0) -> _Arrival:
        deadline = None if timeout is None else time.monotonic() + timeout
        for i, item in enumerate(self._pending):
            if self._matches(item, sender, msg_type):
                return self._pending.pop(i)
        while True:
            remaining = None if deadline is None else max(0.0, deadline - time.monotonic())
            try:
                item = self._queue.get(timeout=remaining)
            except queue.Empty:
                raise RecvTimeout(
                    f"{self.role}: no {msg_type or 'message'} from {sender or 'anyone'}") from None
            if isinstance(item, Exception):
                raise item
            if item.msg_type not in self._allowed:
                raise UnexpectedMessageError(
                    f"{self.role} received disallowed {item.msg_type.name} from {item.sender}")
            if self._matches(item, sender, msg_type):
                return item
            self._pending.append(item)

    @staticmethod
    def _matches(item: _Arrival, sender, msg_type) -> bool:
        return ((sender is None or item.sender == sender)
                and (msg_type is None or item.msg_type == msg_type))


class Link:
    """Directed view of a connection from one party to a named peer."""

    def __init__(self, local_role: str, peer_role: str, conn: Connection,
                 transcript: list | None = None):
        self.local_role = local_role
        self.peer_role = peer_role
        self.conn = conn
        self.transcript = transcript

    def send(self, msg_type, payload: bytes = b""):
        if self.transcript is not None:
            self.transcript.append((self.local_role, self.peer_role, MessageType(msg_type).name))
        self.conn.send(msg_type, payload)


def start_reader(link: Link, mailbox: Mailbox) -> threading.Thread:
    def pump():
        while True:
            try:
                frame = link.conn.recv(timeout=None)
            except ConnectionClosed:
                return
            except Exception as exc:  # sequence/transport errors surface to the party
                mailbox.deliver_failure(exc)
                return
            mailbox.deliver(link.peer_role, frame.msg_type, frame.payload)
    thread = threading.Thread(target=pump, daemon=True,
                              name=f"rx-{mailbox.role}-{link.peer_role}")
    thread.start()
    return thread


def handshake(conn: Connection, role: str, cfg_hash: bytes, timeout: float = 30.0) -> str:
    """Mutual HELLO with config-hash verification; returns the peer's role."""
    conn.send(MessageType.HELLO, encode_hello(role, cfg_hash))
    frame = conn.recv(timeout=timeout)
    if frame.msg_type != MessageType.HELLO:
        raise ProtocolError(f"expected HELLO, got {MessageType(frame.msg_type).name}")
    peer_role, digest = decode_hello(frame.payload)
    if digest != cfg_hash:
        raise ConfigMismatchError(f"{role}: session config hash mismatch with {peer_role}")
    return peer_role


# ---------------------------------------------------------------------------
# Channel adapters over links
# ---------------------------------------------------------------------------

class LinkExchange(ExchangeChannel):
    def __init__(self, link: Link, mailbox: Mailbox, timeout: float = 30.0):
        self._link = link
        self._mailbox = mailbox
        self._timeout = timeout

    def exchange(self, context, arrays):
        self._link.send(MessageType.OPEN_VALUES, encode_open_values(context, arrays))
        item = self._mailbox.recv(self._link.peer_role, MessageType.OPEN_VALUES, self._timeout)
        peer_context, peer_arrays = decode_open_values(item.payload)
        if peer_context != context:
            raise ProtocolError(f"peer desync: opened {peer_context!r}, expected {context!r}")
        return peer_arrays


class DealerClient(SignOracle):
    def __init__(self, link: Link, mailbox: Mailbox, timeout: float = 30.0):
        self._link = link
        self._mailbox = mailbox
        self._timeout = timeout

    def sign_query(self, context, part):
        self._link.send(MessageType.SIGN_REQUEST, encode_sign(context, part))
        item = self._mailbox.recv(self._link.peer_role, MessageType.SIGN_REPLY, self._timeout)
        reply_context, values = decode_sign(item.payload)
        if reply_context != context:
            raise ProtocolError(f"dealer desync: {reply_context!r} vs {context!r}")
        return values


# ---------------------------------------------------------------------------
# Parties
# ---------------------------------------------------------------------------

class Party:
    def __init__(self, role: str, cfg: SessionConfig, timeout: float = 30.0):
        self.role = role
        self.cfg = cfg
        self.timeout = timeout
        self.mailbox = Mailbox(role)
        self.links: dict[str, Link] = {}
        self.report: dict = {}

    def attach(self, link: Link):
        self.links[link.peer_role] = link
        start_reader(link, self.mailbox)

    def run(self):
        raise NotImplementedError


class OwnerParty(Party):
    """Shares one model with both workers, then goes offline."""

    def __init__(self, index: int, cfg: SessionConfig, params: ModelParameters, seed):
        super().__init__(owner_role(index), cfg)
        self.index = index
        self.params = params
        self.seed = seed

    def run(self):
        rng = np.random.default_rng(np.random.SeedSequence([_seed_int(self.seed), self.index]))
        t0 = time.monotonic()
        bundle_a, bundle_b = owner_share_model(self.params, self.cfg, rng, self.index)
        share_ms = (time.monotonic() - t0) * 1e3
        self.links[WORKER_A].send(MessageType.MODEL_SHARES, encode_model_shares(bundle_a))
        self.links[WORKER_B].send(MessageType.MODEL_SHARES, encode_model_shares(bundle_b))
        self.report = {"owner": self.index, "share_ms": share_ms}


class WorkerParty(Party):
    def __init__(self, role: str, cfg: SessionConfig, rounds: int, timeout: float = 30.0):
        if role not in (WORKER_A, WORKER_B):
            raise ProtocolError(f"not a worker role: {role}")
        super().__init__(role, cfg, timeout)
        self.rounds = rounds
        self.holder = HOLDER_A if role == WORKER_A else HOLDER_B

    def run(self):
        peer_role = WORKER_B if self.role == WORKER_A else WORKER_A
        channel = LinkExchange(self.links[peer_role], self.mailbox, self.timeout)
        dealer = DealerClient(self.links[DEALER], self.mailbox, self.timeout)
        bundles: dict[int, ModelShareBundle] = {}
        while len(bundles) < self.cfg.owners:
            item = self.mailbox.recv(None, MessageType.MODEL_SHARES, self.timeout)
            bundle = decode_model_shares(item.payload, self.holder)
            if bundle.owner in bundles:
                raise ProtocolError(f"duplicate model shares from owner {bundle.owner}")
            bundles[bundle.owner] = bundle
        compute_ms = []
        for rnd in range(self.rounds):
            item = self.mailbox.recv(CLIENT, MessageType.INPUT_SHARES, self.timeout)
            got_round, input_values = decode_input_shares(item.payload)
            if got_round != rnd:
                raise ProtocolError(f"{self.role}: expected round {rnd}, got {got_round}")
            t0 = time.monotonic()
            for owner in sorted(bundles):
                self.links[DEALER].send(MessageType.MATERIAL_REQUEST,
                                        encode_material_request(owner, rnd))
                reply = self.mailbox.recv(DEALER, MessageType.MATERIAL_REPLY, self.timeout)
                got_owner, got_rnd, materials = decode_material_reply(reply.payload, self.holder)
                if (got_owner, got_rnd) != (owner, rnd):
                    raise ProtocolError(f"dealer materials for {got_owner}/{got_rnd}, "
                                        f"wanted {owner}/{rnd}")
                out = infer_on_shares(bundles[owner], input_values, materials,
                                      self.cfg, channel, dealer)
                self.links[AGGREGATOR].send(
                    MessageType.PARTIAL_RESULT,
                    encode_partial_result(owner, rnd, out.values.reshape(-1)))
            compute_ms.append((time.monotonic() - t0) * 1e3)
        self.links[DEALER].send(MessageType.BYE)
        self.report = {"role": self.role, "round_compute_ms": compute_ms}


class DealerParty(Party):
    """Generates correlated randomness and answers blinded sign queries."""

    def __init__(self, cfg: SessionConfig, seed, timeout: float = 30.0):
        super().__init__(DEALER, cfg, timeout)
        self.seed = _seed_int(seed)
        self._material_cache: dict = {}
        self._sign_pending: dict = {}

    def _materials(self, owner: int, rnd: int):
        key = (owner, rnd)
        if key not in self._material_cache:
            rng = np.random.default_rng(np.random.SeedSequence([self.seed, owner, rnd]))
            pair = make_round_materials(self.cfg.network, self.cfg.modulus, self.cfg.scale,
                                        rng, tag=f"o{owner}/r{rnd}")
            self._material_cache[key] = {HOLDER_A: pair[0], HOLDER_B: pair[1], "served": set()}
        return self._material_cache[key]

    def run(self):
        mod = self.cfg.modulus
        done = set()
        served_materials = 0
        sign_queries = 0
        while len(done) < 2:
            item = self.mailbox.recv(None, None, self.timeout)
            if item.msg_type == MessageType.BYE:
                done.add(item.sender)
            elif item.msg_type == MessageType.MATERIAL_REQUEST:
                owner, rnd = decode_material_request(item.payload)
                holder = HOLDER_A if item.sender == WORKER_A else HOLDER_B
                entry = self._materials(owner, rnd)
                if holder in entry["served"]:
                    raise ProtocolError(f"worker {item.sender} re-requested materials "
                                        f"for owner {owner} round {rnd}")
                entry["served"].add(holder)
                self.links[item.sender].send(
                    MessageType.MATERIAL_REPLY,
                    encode_material_reply(owner, rnd, entry[holder]))
                served_materials += 1
                if entry["served"] == {HOLDER_A, HOLDER_B}:
                    del self._material_cache[(owner, rnd)]
            elif item.msg_type == MessageType.SIGN_REQUEST:
                context, part = decode_sign(item.payload)
                if context in self._sign_pending:
                    first_sender, first_part = self._sign_pending.pop(context)
                    opened = mod.add(first_part, part)
                    bits = sharing.sign_bits(mod, opened)
                    rng = np.random.default_rng(
                        np.random.SeedSequence([self.seed, 0x5157, _seed_int(context)]))
                    share_a, share_b = split_secret(bits, mod, rng)
                    by_role = {WORKER_A: share_a.values, WORKER_B: share_b.values}
                    for target in (first_sender, item.sender):
                        self.links[target].send(MessageType.SIGN_REPLY,
                                                encode_sign(context, by_role[target]))
                    sign_queries += 1
                else:
                    self._sign_pending[context] = (item.sender, part)
            elif item.msg_type == MessageType.HEARTBEAT:
                pass
            else:
                raise UnexpectedMessageError(f"dealer cannot handle {item.msg_type.name}")
        self.report = {"materials_served": served_materials, "sign_queries": sign_queries}


class AggregatorParty(Party):
    """Reconstructs per-owner outputs, applies noisy aggregation, seals labels."""

    def __init__(self, cfg: SessionConfig, rounds: int, noise_seed,
                 deadline: float = 30.0):
        super().__init__(AGGREGATOR, cfg, deadline)
        self.rounds = rounds
        self.noise_seed = noise_seed
        self.deadline = deadline

    def run(self):
        cfg = self.cfg
        mod, codec = cfg.modulus, cfg.codec
        item = self.mailbox.recv(CLIENT, MessageType.CLIENT_KEY, self.timeout)
        client_pk = item.payload
        if len(client_pk) != 32:
            raise ProtocolError("client key must be 32 bytes")
        rng = np.random.default_rng(np.random.SeedSequence([_seed_int(self.noise_seed), 0xD0]))
        ledger = dp.BudgetLedger(cfg.budget_cap)
        labels, agg_ms = [], []
        for rnd in range(self.rounds):
            partials: dict[tuple[int, str], np.ndarray] = {}
            deadline = time.monotonic() + self.deadline
            while len(partials) < 2 * cfg.owners:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise RoundTimeoutError(self._missing(partials))
                try:
                    item = self.mailbox.recv(None, MessageType.PARTIAL_RESULT, remaining)
                except RecvTimeout:
                    raise RoundTimeoutError(self._missing(partials)) from None
                owner, got_rnd, values = decode_partial_result(item.payload)
                if got_rnd != rnd:
                    raise ProtocolError(f"partial for round {got_rnd} during round {rnd}")
                key = (owner, item.sender)
                if key in partials:
                    raise ProtocolError(f"duplicate partial from {item.sender} for owner {owner}")
                partials[key] = values
            t0 = time.monotonic()
            scores = []
            for owner in range(cfg.owners):
                total = mod.add(partials[(owner, WORKER_A)], partials[(owner, WORKER_B)])
                scores.append(codec.decode(total))
            try:
                ledger.charge(CLIENT, cfg.privacy)
            except dp.BudgetExhaustedError as exc:
                self.links[CLIENT].send(MessageType.ERROR, encode_error(ERR_BUDGET, str(exc)))
                labels.append(None)
                continue
            result = dp.aggregate(scores, cfg.privacy, rng)
            sealed = sealing.seal(result.label, client_pk)
            self.links[CLIENT].send(MessageType.SEALED_RESULT, encode_sealed(rnd, sealed))
            agg_ms.append((time.monotonic() - t0) * 1e3)
            labels.append(result.label)
        self.report = {"labels": labels, "aggregate_ms": agg_ms,
                       "epsilon_spent": ledger.spent_for(CLIENT)}

    def _missing(self, partials) -> list[str]:
        expected = {(o, w) for o in range(self.cfg.owners) for w in (WORKER_A, WORKER_B)}
        return [f"owner{o}/{w}" for o, w in sorted(expected - set(partials))]


class ClientParty(Party):
    """Shares inputs, receives sealed labels, decrypts them."""

    def __init__(self, cfg: SessionConfig, inputs, seed, timeout: float = 60.0):
        super().__init__(CLIENT, cfg, timeout)
        self.inputs = [np.asarray(x, dtype=np.float64) for x in inputs]
        self.seed = seed

    def run(self):
        sk, pk = sealing.generate_keypair()
        self.links[AGGREGATOR].send(MessageType.CLIENT_KEY, pk)
        rng = np.random.default_rng(np.random.SeedSequence([_seed_int(self.seed), 0xC1]))
        labels = []
        for rnd, x in enumerate(self.inputs):
            part_a, part_b = client_share_input(x, self.cfg, rng)
            self.links[WORKER_A].send(MessageType.INPUT_SHARES, encode_input_shares(rnd, part_a))
            self.links[WORKER_B].send(MessageType.INPUT_SHARES, encode_input_shares(rnd, part_b))
            item = self.mailbox.recv(AGGREGATOR, None, self.timeout)
            if item.msg_type == MessageType.ERROR:
                code, message = decode_error(item.payload)
                if code != ERR_BUDGET:
                    raise ProtocolError(f"aggregator error: {message}")
                labels.append(None)
                continue
            if item.msg_type != MessageType.SEALED_RESULT:
                raise ProtocolError(f"unexpected {item.msg_type.name} from aggregator")
            got_rnd, sealed = decode_sealed(item.payload)
            if got_rnd != rnd:
                raise ProtocolError(f"sealed result for round {got_rnd}, expected {rnd}")
            labels.append(sealing.unseal(sealed, sk))
        self.report = {"labels": labels}
