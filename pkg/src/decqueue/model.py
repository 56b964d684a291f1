"""Discrete-time queueing environment.

A system of N queues and K servers evolves in rounds.  Each round every
queue receives a packet with its arrival probability, may send one held
packet to a server, and each server clears the oldest packet it received
with its service probability (ties broken uniformly at random).  Uncleared
packets return to their queues and carry over to later rounds.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

OLDEST = "oldest"
NEWEST = "newest"

EXPLOIT = "exploit"
EXPLORE_MU = "explore_mu"
EXPLORE_LAMBDA = "explore_lambda"


class ContractViolation(ValueError):
    """A decision referenced a server or packet that does not exist."""


@dataclass(frozen=True)
class SystemParams:
    """Ground-truth instance: arrival rates per queue, service rates per server.

    If fewer servers than queues are given, zero-rate servers are appended at
    construction so that ``n_servers >= n_queues`` always holds downstream.
    """

    lam: np.ndarray
    mu: np.ndarray

    def __post_init__(self) -> None:
        lam = np.asarray(self.lam, dtype=float)
        mu = np.asarray(self.mu, dtype=float)
        if lam.ndim != 1 or lam.size == 0:
            raise ValueError("lam must be a non-empty 1-d vector")
        if mu.ndim != 1 or mu.size == 0:
            raise ValueError("mu must be a non-empty 1-d vector")
        if np.any(lam < 0.0) or np.any(lam > 1.0):
            raise ValueError("arrival rates must lie in [0, 1]")
        if np.any(mu < 0.0) or np.any(mu > 1.0):
            raise ValueError("service rates must lie in [0, 1]")
        if mu.size < lam.size:
            mu = np.concatenate([mu, np.zeros(lam.size - mu.size)])
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "mu", mu)

    @property
    def n_queues(self) -> int:
        return self.lam.size

    @property
    def n_servers(self) -> int:
        return self.mu.size


def rate_margin(lam: np.ndarray, mu: np.ndarray) -> float:
    """Largest additive head-room between service and arrival rates.

    min over k of the mean of the k largest service rates minus the k
    largest arrival rates, k ranging over 1..len(lam).  May be <= 0.
    """
    lam = np.sort(np.asarray(lam, dtype=float))[::-1]
    mu = np.sort(np.asarray(mu, dtype=float))[::-1]
    n = lam.size
    diffs = mu[:n] - lam
    prefix = np.cumsum(diffs) / np.arange(1, n + 1)
    return float(prefix.min())


def compute_slack(params: SystemParams) -> float:
    """Largest eta with every top-k service-rate sum >= eta * top-k arrival sum.

    Returns +inf when all arrival rates are zero.
    """
    lam = np.sort(params.lam)[::-1]
    mu = np.sort(params.mu)[::-1]
    n = lam.size
    lam_prefix = np.cumsum(lam)
    if lam_prefix[-1] == 0.0:
        return math.inf
    mu_prefix = np.cumsum(mu[:n])
    return float(np.min(mu_prefix / lam_prefix))


def compute_margin(params: SystemParams) -> float:
    """Additive margin of the instance (may be <= 0)."""
    return rate_margin(params.lam, params.mu)


@dataclass(frozen=True)
class Decision:
    """One queue's action for a round.

    ``server is None`` means idle.  ``packet`` selects which held packet is
    sent (the oldest by default; rate probing sends the newest).  ``target``
    is the opponent queue when the purpose is pairwise arrival-rate probing.
    """

    server: int | None = None
    packet: str = OLDEST
    purpose: str = EXPLOIT
    target: int | None = None

    @property
    def is_send(self) -> bool:
        return self.server is not None


IDLE = Decision(server=None)


@dataclass
class RoundOutcome:
    """What happened in one round.

    ``service_success[j]`` is the per-server success indicator, drawn every
    round for every server whether or not it received packets.  ``winner[j]``
    is the queue whose packet the server attempted (None if none arrived).
    """

    sent_to: list[int | None]
    cleared: list[bool]
    service_success: np.ndarray
    winner: list[int | None]


@dataclass
class EnvStreams:
    """Environment randomness, split so that consumption of arrivals and
    service draws never depends on the queues' decisions (tie-breaks do)."""

    arrivals: np.random.Generator
    service: np.random.Generator
    tiebreak: np.random.Generator


@dataclass
class EpisodeStreams:
    """All randomness of one episode, derived deterministically from a seed:
    environment streams, the queue-shared stream, and per-queue private
    streams."""

    env: EnvStreams
    shared: np.random.Generator
    private: list[np.random.Generator]

    @classmethod
    def from_seed(cls, seed: int, n_queues: int) -> "EpisodeStreams":
        root = np.random.SeedSequence(seed)
        arr, svc, tie, shared, priv = root.spawn(5)
        return cls(
            env=EnvStreams(
                arrivals=np.random.default_rng(arr),
                service=np.random.default_rng(svc),
                tiebreak=np.random.default_rng(tie),
            ),
            shared=np.random.default_rng(shared),
            private=[np.random.default_rng(c) for c in priv.spawn(n_queues)],
        )


@dataclass
class EnvState:
    """Carryover state: current time and, per queue, the held packets' birth
    times in ascending order.  ``arrived[i]`` flags whether queue i received
    a packet born at the current time (visible to this round's decision)."""

    time: int
    buffers: list[deque[int]]
    arrived: np.ndarray

    @classmethod
    def initial(cls, params: SystemParams, env: EnvStreams) -> "EnvState":
        arrived = env.arrivals.random(params.n_queues) < params.lam
        buffers = [deque([1]) if a else deque() for a in arrived]
        return cls(time=1, buffers=buffers, arrived=arrived)

    def queue_lengths(self) -> list[int]:
        return [len(b) for b in self.buffers]


def env_step(
    params: SystemParams,
    state: EnvState,
    decisions: list[Decision],
    env: EnvStreams,
) -> tuple[EnvState, RoundOutcome]:
    """Resolve one round in place.

    Per server, the sent packet with the smallest birth time wins (uniform
    tie-break over equal birth times, servers processed in ascending index
    order); the winner's packet is removed iff the server's success draw
    fires; everything else returns to its queue.  Arrivals for the next
    round are then appended and time advances.
    """
    t = state.time
    n, k = params.n_queues, params.n_servers
    service_success = env.service.random(k) < params.mu

    sent_to: list[int | None] = [None] * n
    cleared = [False] * n
    winner: list[int | None] = [None] * k
    by_server: dict[int, list[tuple[int, int]]] = {}

    for q, d in enumerate(decisions):
        if d.server is None:
            continue
        if not 0 <= d.server < k:
            raise ContractViolation(f"queue {q} chose server {d.server} outside [0, {k})")
        buf = state.buffers[q]
        if not buf:
            raise ContractViolation(f"queue {q} sent with an empty buffer")
        if d.packet not in (OLDEST, NEWEST):
            raise ContractViolation(f"queue {q} selected unknown packet {d.packet!r}")
        birth = buf[0] if d.packet == OLDEST else buf[-1]
        sent_to[q] = d.server
        by_server.setdefault(d.server, []).append((birth, q))

    for j in sorted(by_server):
        entries = by_server[j]
        oldest = min(b for b, _ in entries)
        tied = sorted(q for b, q in entries if b == oldest)
        w = tied[0] if len(tied) == 1 else tied[int(env.tiebreak.integers(len(tied)))]
        winner[j] = w
        if service_success[j]:
            cleared[w] = True
            buf = state.buffers[w]
            if decisions[w].packet == OLDEST:
                buf.popleft()
            else:
                buf.pop()

    arrived = env.arrivals.random(n) < params.lam
    for q in range(n):
        if arrived[q]:
            state.buffers[q].append(t + 1)
    state.time = t + 1
    state.arrived = arrived
    return state, RoundOutcome(sent_to, cleared, service_success, winner)


class PolicyBundle(Protocol):
    """Decision source for a whole episode (joint or per-queue behind an
    adapter).  ``decide_round`` must not mutate the state."""

    def setup(self, params: SystemParams, streams: EpisodeStreams) -> None: ...

    def decide_round(self, t: int, state: EnvState) -> list[Decision]: ...

    def observe_round(
        self, t: int, decisions: list[Decision], outcome: RoundOutcome, arrived: np.ndarray
    ) -> None: ...

    def explored_flags(self) -> np.ndarray | None: ...

    def final_report(self) -> dict: ...


@dataclass
class Trajectory:
    """Per-round metrics recorded at ``times`` (decision-time snapshots).

    ``q[s, i]`` is queue i's length at time ``times[s]`` before service;
    ``cleared_cum``/``arrived_cum`` count through the end of that round.
    """

    times: np.ndarray
    q: np.ndarray
    cleared_cum: np.ndarray
    arrived_cum: np.ndarray
    explored: np.ndarray
    final: dict = field(default_factory=dict)


def run_episode(
    params: SystemParams,
    bundle: PolicyBundle,
    horizon: int,
    seed: int,
    record_stride: int = 1,
) -> Trajectory:
    """Run one episode; a deterministic function of its arguments."""
    n = params.n_queues
    streams = EpisodeStreams.from_seed(seed, n)
    bundle.setup(params, streams)

    n_rows = -(-horizon // record_stride) if horizon > 0 else 0
    times = np.zeros(n_rows, dtype=np.int64)
    q = np.zeros((n_rows, n), dtype=np.int64)
    cleared_cum = np.zeros((n_rows, n), dtype=np.int64)
    arrived_cum = np.zeros((n_rows, n), dtype=np.int64)
    explored = np.zeros((n_rows, n), dtype=np.int8)

    if horizon == 0:
        return Trajectory(times, q, cleared_cum, arrived_cum, explored, bundle.final_report())

    state = EnvState.initial(params, streams.env)
    cleared_run = np.zeros(n, dtype=np.int64)
    arrived_run = np.zeros(n, dtype=np.int64)
    row = 0
    for t in range(1, horizon + 1):
        arrived_run += state.arrived
        record = (t - 1) % record_stride == 0
        if record:
            times[row] = t
            q[row] = state.queue_lengths()
        arrived_now = state.arrived
        decisions = bundle.decide_round(t, state)
        state, outcome = env_step(params, state, decisions, streams.env)
        bundle.observe_round(t, decisions, outcome, arrived_now)
        cleared_run += outcome.cleared
        if record:
            cleared_cum[row] = cleared_run
            arrived_cum[row] = arrived_run
            flags = bundle.explored_flags()
            if flags is not None:
                explored[row] = flags
            row += 1
    return Trajectory(times, q, cleared_cum, arrived_cum, explored, bundle.final_report())
