"""End-to-end session orchestration over loopback queues or TCP sockets.

Builds the full party topology, runs every party on its own thread, joins
them, and collects per-party reports.  The same party code runs on both
transports; only the wiring differs, so released labels are identical.
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from . import dp
from .model import ModelParameters, forward_fixed
from .protocol import (AGGREGATOR, CLIENT, DEALER, WORKER_A, WORKER_B,
                       AggregatorParty, ClientParty, DealerParty, Link, OwnerParty,
                       Party, SessionConfig, WorkerParty, handshake, owner_role)
from .transport import TcpListener, loopback_pair, tcp_connect

# Every connection in the topology as (dialer, listener) pairs; owners and the
# client dial in, workers dial each other and the back-end roles.
def topology_edges(owners: int) -> list[tuple[str, str]]:
    edges = [(WORKER_A, WORKER_B), (WORKER_A, DEALER), (WORKER_B, DEALER),
             (WORKER_A, AGGREGATOR), (WORKER_B, AGGREGATOR),
             (CLIENT, WORKER_A), (CLIENT, WORKER_B), (CLIENT, AGGREGATOR)]
    for i in range(owners):
        edges.append((owner_role(i), WORKER_A))
        edges.append((owner_role(i), WORKER_B))
    return edges


def default_endpoints(owners: int, host: str = "127.0.0.1",
                      base_port: int = 0) -> dict[str, tuple[str, int]]:
    """Listener address per listening role; port 0 lets the OS choose."""
    listeners = sorted({b for _, b in topology_edges(owners)})
    return {role: (host, base_port and base_port + i) for i, role in enumerate(listeners)}


@dataclass
class SessionReport:
    labels: list
    reference_labels: list
    transcript: list = field(default_factory=list)
    party_reports: dict = field(default_factory=dict)
    wall_seconds: float = 0.0

    @property
    def agreement(self) -> float:
        pairs = list(zip(self.labels, self.reference_labels))
        if not pairs:
            return 1.0
        return sum(a == b for a, b in pairs) / len(pairs)


def reference_labels(cfg: SessionConfig, models: list[ModelParameters], inputs,
                     noise_seed) -> list[int]:
    """Plaintext shadow of the whole pipeline: fixed-point forward passes per
    model, then the same noisy aggregation with the same noise stream."""
    codec = cfg.codec
    rng = np.random.default_rng(np.random.SeedSequence([_seed(noise_seed), 0xD0]))
    ledger = dp.BudgetLedger(cfg.budget_cap)
    out = []
    for x in inputs:
        scores = [codec.decode(forward_fixed(params, x, codec)) for params in models]
        try:
            ledger.charge(CLIENT, cfg.privacy)
        except dp.BudgetExhaustedError:
            out.append(None)
            continue
        out.append(dp.aggregate(scores, cfg.privacy, rng).label)
    return out


def _seed(seed) -> int:
    from .protocol import _seed_int
    return _seed_int(seed)


def build_parties(cfg: SessionConfig, models: list[ModelParameters], inputs,
                  seed, deadline: float = 60.0) -> dict[str, Party]:
    if len(models) != cfg.owners:
        raise ValueError(f"{cfg.owners} owners but {len(models)} models")
    rounds = len(inputs)
    parties: dict[str, Party] = {
        WORKER_A: WorkerParty(WORKER_A, cfg, rounds, timeout=deadline),
        WORKER_B: WorkerParty(WORKER_B, cfg, rounds, timeout=deadline),
        DEALER: DealerParty(cfg, seed=(_seed(seed) + 1), timeout=deadline),
        AGGREGATOR: AggregatorParty(cfg, rounds, noise_seed=(_seed(seed) + 2),
                                    deadline=deadline),
        CLIENT: ClientParty(cfg, inputs, seed=(_seed(seed) + 3), timeout=2 * deadline),
    }
    for i, params in enumerate(models):
        parties[owner_role(i)] = OwnerParty(i, cfg, params, seed=(_seed(seed) + 4))
    return parties


def wire_loopback(parties: dict[str, Party], cfg: SessionConfig,
                  session_id: bytes, transcript: list):
    digest = cfg.canonical_hash()
    for dialer, listener in topology_edges(cfg.owners):
        c1, c2 = loopback_pair(session_id)
        # Send both HELLOs first so neither handshake blocks on the other.
        threads = []
        results = {}
        for name, conn, role in ((dialer, c1, dialer), (listener, c2, listener)):
            def shake(conn=conn, role=role, name=name):
                results[name] = handshake(conn, role, digest)
            threads.append(threading.Thread(target=shake))
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        parties[dialer].attach(Link(dialer, listener, c1, transcript))
        parties[listener].attach(Link(listener, dialer, c2, transcript))


def wire_tcp(parties: dict[str, Party], cfg: SessionConfig, session_id: bytes,
             transcript: list, endpoints: dict[str, tuple[str, int]] | None = None):
    endpoints = dict(endpoints or default_endpoints(cfg.owners))
    edges = topology_edges(cfg.owners)
    listeners: dict[str, TcpListener] = {}
    for role in {b for _, b in edges}:
        host, port = endpoints.get(role, ("127.0.0.1", 0))
        listeners[role] = TcpListener(host, port)
        endpoints[role] = listeners[role].address
    digest = cfg.canonical_hash()
    failures = []

    def accept_side(listener_role: str, count: int):
        try:
            for _ in range(count):
                conn = listeners[listener_role].accept(session_id, timeout=30.0)
                peer = handshake(conn, listener_role, digest)
                parties[listener_role].attach(Link(listener_role, peer, conn, transcript))
        except Exception as exc:
            failures.append((listener_role, exc))

    def dial_side(dialer: str, listener: str):
        try:
            host, port = endpoints[listener]
            conn = tcp_connect(host, port, session_id)
            peer = handshake(conn, dialer, digest)
            if peer != listener:
                raise RuntimeError(f"dialed {listener}, greeted by {peer}")
            parties[dialer].attach(Link(dialer, listener, conn, transcript))
        except Exception as exc:
            failures.append((dialer, exc))

    counts: dict[str, int] = {}
    for _, b in edges:
        counts[b] = counts.get(b, 0) + 1
    threads = [threading.Thread(target=accept_side, args=(role, n))
               for role, n in counts.items()]
    threads += [threading.Thread(target=dial_side, args=e) for e in edges]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for listener in listeners.values():
        listener.close()
    if failures:
        role, exc = failures[0]
        raise RuntimeError(f"wiring failed at {role}: {exc}") from exc


def wire_party_tcp(party: Party, cfg: SessionConfig, session_id: bytes,
                   endpoints: dict[str, tuple[str, int]], timeout: float = 60.0):
    """Connect one party to its peers; used when each role is its own process.

    The party listens on its configured endpoint for every edge where it is
    the listener and dials every edge where it is the dialer.
    """
    role = party.role
    edges = topology_edges(cfg.owners)
    digest = cfg.canonical_hash()
    accept_count = sum(1 for _, b in edges if b == role)
    dial_targets = [b for a, b in edges if a == role]
    listener = None
    if accept_count:
        host, port = endpoints[role]
        listener = TcpListener(host, port)
    failures: list = []

    def accept_loop():
        try:
            for _ in range(accept_count):
                conn = listener.accept(session_id, timeout=timeout)
                peer = handshake(conn, role, digest, timeout=timeout)
                party.attach(Link(role, peer, conn, None))
        except Exception as exc:
            failures.append(exc)

    def dial(target: str):
        try:
            host, port = endpoints[target]
            conn = tcp_connect(host, port, session_id, retries=int(timeout * 10))
            peer = handshake(conn, role, digest, timeout=timeout)
            if peer != target:
                raise RuntimeError(f"dialed {target}, greeted by {peer}")
            party.attach(Link(role, target, conn, None))
        except Exception as exc:
            failures.append(exc)

    threads = [threading.Thread(target=accept_loop)] if accept_count else []
    threads += [threading.Thread(target=dial, args=(t,)) for t in dial_targets]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if listener is not None:
        listener.close()
    if failures:
        raise RuntimeError(f"wiring failed for {role}: {failures[0]}") from failures[0]


def run_session(cfg: SessionConfig, models: list[ModelParameters], inputs,
                seed=0, transport: str = "loopback",
                endpoints: dict | None = None, deadline: float = 60.0,
                keep_transcript: bool = True) -> SessionReport:
    """Run the full protocol for len(inputs) rounds and return the report."""
    if transport not in ("loopback", "tcp"):
        raise ValueError(f"unknown transport {transport!r}")
    session_id = os.urandom(16)
    transcript: list = []
    parties = build_parties(cfg, models, inputs, seed, deadline)
    if transport == "loopback":
        wire_loopback(parties, cfg, session_id, transcript)
    else:
        wire_tcp(parties, cfg, session_id, transcript, endpoints)
    t0 = time.monotonic()
    errors: list[tuple[str, Exception]] = []

    def run_party(role: str, party: Party):
        try:
            party.run()
        except Exception as exc:
            errors.append((role, exc))

    threads = [threading.Thread(target=run_party, args=(role, p), name=f"party-{role}")
               for role, p in parties.items()]
    for t in threads:
        t.start()
    for t in threads:
        t.join(timeout=deadline * max(4, len(inputs)))
    if errors:
        role, exc = errors[0]
        raise RuntimeError(f"party {role} failed: {exc}") from exc
    wall = time.monotonic() - t0
    refs = reference_labels(cfg, models, inputs, noise_seed=(_seed(seed) + 2))
    return SessionReport(
        labels=parties[CLIENT].report["labels"],
        reference_labels=refs,
        transcript=transcript if keep_transcript else [],
        party_reports={role: p.report for role, p in parties.items()},
        wall_seconds=wall)
