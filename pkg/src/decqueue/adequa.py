"""Synchronized epsilon-greedy queueing strategy.

Every round, all queues consume one identical tuple of shared draws.  With
probability eps_t they jointly explore: either each queue probes a distinct
server to estimate service rates, or queues pair up via a round-robin
schedule and probe each other's arrival rates by racing same-age packets at
a common server.  Otherwise each queue exploits: it solves the dominant
allocation from its private estimates, decomposes it with the shared cost
matrix, and applies the permutation selected by the shared draw.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .birkhoff import BvnDecomposition, draw_cost_matrix, ordered_birkhoff, psi_sample
from .mapping import PhiConfig, compute_phi
from .model import (
    EXPLOIT,
    EXPLORE_LAMBDA,
    EXPLORE_MU,
    IDLE,
    NEWEST,
    OLDEST,
    Decision,
    EnvState,
    EpisodeStreams,
    SystemParams,
)


@dataclass(frozen=True)
class ExplorationSchedule:
    """Exploration probability eps_t = min(1, scale * t**-exponent)."""

    scale: float
    exponent: float = 0.25

    def __post_init__(self) -> None:
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if not 0.0 < self.exponent < 1.0:
            raise ValueError("exponent must lie in (0, 1)")

    @classmethod
    def for_system(cls, params: SystemParams, exponent: float = 0.25) -> "ExplorationSchedule":
        return cls(scale=float(params.n_queues + params.n_servers), exponent=exponent)


def epsilon(schedule: ExplorationSchedule, t: int) -> float:
    """Exploration probability at round t >= 1, clipped to 1."""
    return min(1.0, schedule.scale * t ** (-schedule.exponent))


@dataclass(frozen=True)
class SharedDraws:
    """Per-round shared randomness, drawn in the fixed order
    (explore bit, omega, n, r, l); n only on exploration rounds, r and l
    only when n selects pairwise arrival probing."""

    explore: bool
    omega: float
    n: int | None = None
    r: int | None = None
    l: int | None = None


def draw_shared(
    rng: np.random.Generator,
    t: int,
    schedule: ExplorationSchedule,
    n_queues: int,
    n_servers: int,
) -> SharedDraws:
    explore = rng.random() < epsilon(schedule, t)
    omega = rng.random()
    n = r = l = None
    if explore:
        n = 1 + int(rng.integers(n_queues + n_servers))
        if n > n_servers:
            r = 1 + int(rng.integers(n_queues))
            l = 1 + int(rng.integers(n_servers))
    return SharedDraws(explore, omega, n, r, l)


def berger_opponent(queue: int, r: int, n_queues: int) -> int | None:
    """Opponent of ``queue`` (0-based) in round ``r`` of the all-meet-all
    round-robin schedule, or None for a bye.

    With n' positions (n_queues rounded up to even) and m = n' - 1 rounds,
    positions a, b < n' meet in the round whose residue mod m is a + b (in
    1-based position numbering) and position a meets the fixed seat n' in
    the round with residue 2a.  Draws r in [1, n_queues] are reduced mod m
    onto valid rounds.  When n_queues is odd, meeting the phantom seat is a
    bye.
    """
    if not 0 <= queue < n_queues:
        raise ValueError(f"queue {queue} outside [0, {n_queues})")
    if not 1 <= r <= n_queues:
        raise ValueError(f"round draw {r} outside [1, {n_queues}]")
    n_pos = n_queues + (n_queues % 2)
    m = n_pos - 1
    rr = (r - 1) % m + 1
    rho = rr % m
    i = queue + 1
    inv2 = (m + 1) // 2
    special = (rho * inv2) % m or m
    if i == n_pos:
        j = special
    elif i == special:
        j = n_pos
    else:
        j = (rho - i) % m or m
    return None if j > n_queues else j - 1


@dataclass
class QueueEstimates:
    """One queue's private statistics.

    ``mu_hat``/``pull_counts`` track per-server means from service probing;
    ``s_hat``/``s_counts`` track clear rates from pairwise arrival probing;
    ``lambda_hat`` holds the plug-in arrival-rate estimates (the queue's own
    slot is the running mean of its observed arrivals).  The cached
    allocation is invalidated whenever estimates change.
    """

    mu_hat: np.ndarray
    pull_counts: np.ndarray
    s_hat: np.ndarray
    s_counts: np.ndarray
    lambda_hat: np.ndarray
    own_arrivals: int = 0
    own_rounds: int = 0
    cached_phi: np.ndarray | None = None
    cached_decomposition: BvnDecomposition | None = None
    cached_inputs: np.ndarray | None = None
    solver_steps: int = 0
    dirty: bool = True

    @classmethod
    def initial(cls, n_queues: int, n_servers: int) -> "QueueEstimates":
        # Pessimistic start: assume saturated arrivals and dead servers so the
        # allocation falls back to the identity until data accumulates.
        return cls(
            mu_hat=np.zeros(n_servers),
            pull_counts=np.zeros(n_servers, dtype=np.int64),
            s_hat=np.zeros(n_queues),
            s_counts=np.zeros(n_queues, dtype=np.int64),
            lambda_hat=np.ones(n_queues),
        )


def mu_tilde(est: QueueEstimates) -> float:
    """Pull-count-weighted mean of the service-rate estimates (0 before any
    probing)."""
    total = int(est.pull_counts.sum())
    if total == 0:
        return 0.0
    return float(est.pull_counts @ est.mu_hat) / total


def observe_arrival(est: QueueEstimates, arrived: bool) -> None:
    """Fold the queue's own arrival indicator for this round."""
    est.own_rounds += 1
    est.own_arrivals += bool(arrived)


def _refresh_own_rate(est: QueueEstimates, queue: int) -> None:
    if est.own_rounds:
        est.lambda_hat[queue] = est.own_arrivals / est.own_rounds


def update_after_round(
    est: QueueEstimates, queue: int, decision: Decision, cleared: bool
) -> None:
    """Fold one round's observation into the estimates.

    Service probing updates the pulled server's running mean; arrival
    probing updates the opponent's clear-rate statistic and recomputes its
    arrival estimate as clamp(2 - 2*S_j/mu_tilde) (left untouched while no
    service pulls exist).  Exploit and idle rounds change nothing.
    """
    if decision.server is None or decision.purpose == EXPLOIT:
        return
    if decision.purpose == EXPLORE_MU:
        k = decision.server
        est.pull_counts[k] += 1
        est.mu_hat[k] += (float(cleared) - est.mu_hat[k]) / est.pull_counts[k]
    elif decision.purpose == EXPLORE_LAMBDA:
        j = decision.target
        est.s_counts[j] += 1
        est.s_hat[j] += (float(cleared) - est.s_hat[j]) / est.s_counts[j]
        mt = mu_tilde(est)
        if mt > 0.0:
            est.lambda_hat[j] = min(1.0, max(0.0, 2.0 - 2.0 * est.s_hat[j] / mt))
    else:
        raise ValueError(f"unknown decision purpose {decision.purpose!r}")
    _refresh_own_rate(est, queue)
    est.dirty = True


def decide(
    t: int,
    queue: int,
    buffer,
    est: QueueEstimates,
    draws: SharedDraws,
    params: SystemParams,
    phi_cfg: PhiConfig,
    cost_matrix: np.ndarray,
) -> Decision:
    """One queue's decision for round t given the shared draws.

    Exploit rounds refresh the cached allocation if estimates changed, then
    send the oldest packet to the sampled permutation's server.  Service
    probing sends the oldest packet to the queue's rotation-assigned server.
    Arrival probing sends the packet born this round (if any) to the pair's
    common server.
    """
    n, k = params.n_queues, params.n_servers
    if not draws.explore:
        if not buffer:
            return IDLE
        refresh_allocation(est, queue, phi_cfg, cost_matrix)
        perm = psi_sample(est.cached_decomposition, draws.omega)
        return Decision(server=perm[queue], packet=OLDEST, purpose=EXPLOIT)
    if draws.n <= k:
        if not buffer:
            return IDLE
        server = (draws.n + queue + 1) % k
        return Decision(server=server, packet=OLDEST, purpose=EXPLORE_MU)
    opponent = berger_opponent(queue, draws.r, n)
    if opponent is None:
        return IDLE
    if not buffer or buffer[-1] != t:
        return IDLE
    server = (draws.l + min(queue, opponent) + 1) % k
    return Decision(server=server, packet=NEWEST, purpose=EXPLORE_LAMBDA, target=opponent)


def refresh_allocation(
    est: QueueEstimates, queue: int, phi_cfg: PhiConfig, cost_matrix: np.ndarray
) -> bool:
    """Recompute the cached allocation and its decomposition when stale.

    With a positive ``refresh_threshold`` the recompute is skipped until the
    estimates have drifted by that much from the cached inputs; the dirty
    flag then stays set.  Returns True when a recompute happened.
    """
    if est.cached_decomposition is not None and not est.dirty:
        return False
    current = np.concatenate([est.lambda_hat, est.mu_hat])
    if (
        est.cached_decomposition is not None
        and phi_cfg.refresh_threshold > 0.0
        and np.abs(current - est.cached_inputs).max() < phi_cfg.refresh_threshold
    ):
        return False
    # Warm starts continue the previous run's step schedule (capped so the
    # solver keeps enough step size to track moving estimates).
    cfg = replace(
        phi_cfg,
        warm_start=est.cached_phi,
        step_offset=min(est.solver_steps, 400),
    )
    est.cached_phi = compute_phi(est.lambda_hat, est.mu_hat, cfg)
    est.cached_decomposition = ordered_birkhoff(est.cached_phi, cost_matrix)
    est.cached_inputs = current
    est.solver_steps += phi_cfg.max_outer_iters
    est.dirty = False
    return True


class AdequaQueue:
    """Per-queue decision source implementing the synchronized strategy."""

    needs_shared_draws = True
    needs_cost_matrix = True

    def __init__(self, phi_cfg: PhiConfig | None = None):
        self.phi_cfg = phi_cfg if phi_cfg is not None else PhiConfig()
        self.queue: int = -1
        self.params: SystemParams | None = None
        self.cost_matrix: np.ndarray | None = None
        self.estimates: QueueEstimates | None = None

    def setup(
        self,
        params: SystemParams,
        streams: EpisodeStreams,
        queue: int,
        cost_matrix: np.ndarray | None,
    ) -> None:
        self.params = params
        self.queue = queue
        self.cost_matrix = cost_matrix
        self.estimates = QueueEstimates.initial(params.n_queues, params.n_servers)

    def decide(self, t: int, buffer, draws: SharedDraws) -> Decision:
        return decide(
            t, self.queue, buffer, self.estimates, draws, self.params, self.phi_cfg, self.cost_matrix
        )

    def observe(self, t: int, decision: Decision, cleared: bool, arrived: bool) -> None:
        observe_arrival(self.estimates, arrived)
        update_after_round(self.estimates, self.queue, decision, cleared)

    def report(self) -> dict:
        return {
            "mu_hat": self.estimates.mu_hat.copy(),
            "lambda_hat": self.estimates.lambda_hat.copy(),
            "pull_counts": self.estimates.pull_counts.copy(),
            "s_counts": self.estimates.s_counts.copy(),
        }


class PerQueueBundle:
    """Adapts independent per-queue policies to the episode loop.

    When any policy consumes shared draws, one tuple is drawn per round and
    handed to every queue; the shared cost matrix is drawn once per episode
    before any round draws.  Setting ``record_draws`` keeps the per-round
    tuples for synchronization checks.
    """

    def __init__(self, policies: list, schedule: ExplorationSchedule | None = None, record_draws: bool = False):
        self.policies = policies
        self.schedule = schedule
        self.draw_log: list[SharedDraws] | None = [] if record_draws else None
        self._explored: np.ndarray | None = None
        self._needs_draws = [getattr(p, "needs_shared_draws", False) for p in policies]

    def setup(self, params: SystemParams, streams: EpisodeStreams) -> None:
        if len(self.policies) != params.n_queues:
            raise ValueError("one policy per queue is required")
        self.params = params
        self.shared = streams.shared
        cost = None
        if any(getattr(p, "needs_cost_matrix", False) for p in self.policies):
            cost = draw_cost_matrix(streams.shared, params.n_servers)
        if any(self._needs_draws) and self.schedule is None:
            self.schedule = ExplorationSchedule.for_system(params)
        for q, p in enumerate(self.policies):
            p.setup(params, streams, q, cost)
        self._explored = np.zeros(params.n_queues, dtype=np.int8)

    def decide_round(self, t: int, state: EnvState) -> list[Decision]:
        draws = None
        if any(self._needs_draws):
            draws = draw_shared(
                self.shared, t, self.schedule, self.params.n_queues, self.params.n_servers
            )
            if self.draw_log is not None:
                self.draw_log.append(draws)
        decisions = []
        for q, p in enumerate(self.policies):
            decisions.append(p.decide(t, state.buffers[q], draws))
            self._explored[q] = int(draws.explore) if self._needs_draws[q] else 0
        return decisions

    def observe_round(self, t, decisions, outcome, arrived) -> None:
        for q, p in enumerate(self.policies):
            p.observe(t, decisions[q], outcome.cleared[q], bool(arrived[q]))

    def explored_flags(self) -> np.ndarray | None:
        return self._explored

    def final_report(self) -> dict:
        reports = [p.report() if hasattr(p, "report") else {} for p in self.policies]
        return {"queues": reports}


def adequa_bundle(
    params: SystemParams,
    schedule: ExplorationSchedule | None = None,
    phi_cfg: PhiConfig | None = None,
    record_draws: bool = False,
) -> PerQueueBundle:
    """All queues following the synchronized strategy."""
    policies = [AdequaQueue(phi_cfg) for _ in range(params.n_queues)]
    return PerQueueBundle(policies, schedule, record_draws=record_draws)
