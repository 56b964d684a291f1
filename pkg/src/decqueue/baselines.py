"""Comparison policies.

A centralized stationary oracle built from the true rates, windowed
exponential-weights bandit queues, a deterministic synchronized-schedule
family that is unstable yet unattractive to deviate from, and a fixed
server distribution for deviation experiments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .birkhoff import draw_cost_matrix, ordered_birkhoff, psi_sample
from .mapping import PhiConfig, compute_phi
from .model import (
    EXPLOIT,
    IDLE,
    OLDEST,
    Decision,
    EnvState,
    EpisodeStreams,
    SystemParams,
    Trajectory,
    compute_margin,
    run_episode,
)


class NonPositiveMargin(ValueError):
    """No stable stationary joint policy exists for this instance."""


class CentralizedBundle:
    """Stationary joint policy: one dominant allocation computed from the
    true rates, one shared draw per round selecting a permutation for all
    queues at once, so no two queues ever target the same server."""

    def __init__(self, phi_cfg: PhiConfig | None = None):
        self.phi_cfg = phi_cfg if phi_cfg is not None else PhiConfig()

    def setup(self, params: SystemParams, streams: EpisodeStreams) -> None:
        if compute_margin(params) <= 0.0:
            raise NonPositiveMargin("instance margin must be positive for a stationary policy")
        self.params = params
        self.shared = streams.shared
        cost = draw_cost_matrix(streams.shared, params.n_servers)
        allocation = compute_phi(params.lam, params.mu, self.phi_cfg)
        self.decomposition = ordered_birkhoff(allocation, cost)
        self.allocation = allocation

    def decide_round(self, t: int, state: EnvState) -> list[Decision]:
        omega = self.shared.random()
        perm = psi_sample(self.decomposition, omega)
        return [
            Decision(server=perm[q], packet=OLDEST, purpose=EXPLOIT) if state.buffers[q] else IDLE
            for q in range(self.params.n_queues)
        ]

    def observe_round(self, t, decisions, outcome, arrived) -> None:
        pass

    def explored_flags(self):
        return None

    def final_report(self) -> dict:
        return {}


def centralized_policy(params: SystemParams, phi_cfg: PhiConfig | None = None) -> CentralizedBundle:
    """Joint decision source for the centralized stationary policy.

    Raises NonPositiveMargin immediately when the instance margin is <= 0.
    """
    if compute_margin(params) <= 0.0:
        raise NonPositiveMargin("instance margin must be positive for a stationary policy")
    return CentralizedBundle(phi_cfg)


@dataclass(frozen=True)
class Exp3Config:
    """Windowed bandit configuration: window k has length 2**k, and the
    learning rate / exploration mix / confidence boost are re-tuned for
    each window's known horizon."""

    delta: float = 0.1


class Exp3Queue:
    """Exponential-weights bandit with high-probability correction,
    restarted on doubling windows.  Acts only when holding packets (sends
    the oldest); weights update only on rounds where it sent; reward is the
    cleared bit.  Idle rounds advance the window clock but freeze weights."""

    needs_shared_draws = False
    needs_cost_matrix = False

    def __init__(self, cfg: Exp3Config | None = None):
        self.cfg = cfg if cfg is not None else Exp3Config()

    def setup(self, params: SystemParams, streams: EpisodeStreams, queue: int, cost) -> None:
        self.k_arms = params.n_servers
        self.rng = streams.private[queue]
        self._start_window(1)

    def _start_window(self, index: int) -> None:
        self.window = index
        self.window_len = 2**index
        self.window_end = 2 ** (index + 1) - 2
        k = self.k_arms
        t_w = self.window_len
        delta_k = self.cfg.delta / (index * (index + 1))
        log_k = math.log(k) if k > 1 else 0.0
        self.gamma = min(0.6, 2.0 * math.sqrt(0.6 * k * log_k / t_w))
        self.boost = 2.0 * math.sqrt(math.log(k * t_w / delta_k))
        self.sqrt_kt = math.sqrt(k * t_w)
        self.weights = np.ones(k)
        self._last_probs: np.ndarray | None = None

    def _probs(self) -> np.ndarray:
        w = self.weights / self.weights.sum()
        return (1.0 - self.gamma) * w + self.gamma / self.k_arms

    def decide(self, t: int, buffer, draws) -> Decision:
        if t > self.window_end:
            self._start_window(self.window + 1)
        if not buffer:
            self._last_probs = None
            return IDLE
        probs = self._probs()
        arm = int(np.searchsorted(np.cumsum(probs), self.rng.random(), side="right"))
        arm = min(arm, self.k_arms - 1)
        self._last_probs = probs
        return Decision(server=arm, packet=OLDEST, purpose=EXPLOIT)

    def observe(self, t: int, decision: Decision, cleared: bool, arrived: bool) -> None:
        if decision.server is None or self._last_probs is None:
            return
        probs = self._last_probs
        gain = self.boost / (probs * self.sqrt_kt)
        gain[decision.server] += float(cleared) / probs[decision.server]
        self.weights *= np.exp(self.gamma / (3.0 * self.k_arms) * gain)
        self.weights /= self.weights.max()

    def report(self) -> dict:
        return {}


def exp3_policy(cfg: Exp3Config | None = None) -> Exp3Queue:
    """Per-queue windowed bandit decision source (stream bound at setup)."""
    return Exp3Queue(cfg)


class FixedQueue:
    """I.i.d. draws from a fixed server distribution via the queue's private
    stream; sends the oldest packet when one is held."""

    needs_shared_draws = False
    needs_cost_matrix = False

    def __init__(self, dist):
        p = np.asarray(dist, dtype=float)
        if p.ndim != 1 or np.any(p < 0.0) or not math.isclose(p.sum(), 1.0, abs_tol=1e-9):
            raise ValueError("distribution must be nonnegative and sum to 1")
        self.dist = p
        self.cum = np.cumsum(p)

    def setup(self, params: SystemParams, streams: EpisodeStreams, queue: int, cost) -> None:
        if self.dist.size != params.n_servers:
            raise ValueError("distribution length must equal the server count")
        self.rng = streams.private[queue]

    def decide(self, t: int, buffer, draws) -> Decision:
        server = int(np.searchsorted(self.cum, self.rng.random(), side="right"))
        server = min(server, self.dist.size - 1)
        if not buffer:
            return IDLE
        return Decision(server=server, packet=OLDEST, purpose=EXPLOIT)

    def observe(self, t, decision, cleared, arrived) -> None:
        pass

    def report(self) -> dict:
        return {}


def fixed_policy(dist) -> FixedQueue:
    """Per-queue decision source playing a fixed distribution over servers."""
    return FixedQueue(dist)


@dataclass(frozen=True)
class CounterexampleConfig:
    """Synchronized-schedule instance: n_queues queues and servers with
    arrival rate 1/N each and service rate 2(N-d)/N^2 each, run over windows
    of length k^2 whose first ceil(alpha * k^2) rounds form stage 1.

    ``unstable_regime`` / ``no_policy_regret_regime`` record which side of
    the two alpha thresholds this configuration sits on.
    """

    n_queues: int
    d: int
    alpha: float

    def __post_init__(self) -> None:
        if self.n_queues < 4 or self.n_queues % 2:
            raise ValueError("n_queues must be even and at least 4")
        if not 2 <= self.d < self.n_queues:
            raise ValueError("d must satisfy 2 <= d < n_queues")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")

    @property
    def unstable_regime(self) -> bool:
        return self.alpha > 1.0 - self.d / (self.n_queues - self.d)

    @property
    def no_policy_regret_regime(self) -> bool:
        return self.alpha < 1.0 - 1.0 / (self.n_queues - 1)

    def params(self) -> SystemParams:
        n = self.n_queues
        lam = np.full(n, 1.0 / n)
        mu = np.full(n, 2.0 * (n - self.d) / n**2)
        return SystemParams(lam, mu)

    def window_length(self, k: int) -> int:
        return k * k

    def window_boundaries(self, horizon: int) -> list[int]:
        """Cumulative end times W_k of the windows fully inside horizon."""
        out, total, k = [], 0, 0
        while True:
            k += 1
            total += self.window_length(k)
            if total > horizon:
                return out
            out.append(total)


@dataclass(frozen=True)
class ProofSketchInstance:
    """Companion preset: 2n queues/servers with arrival rate 1/(2n) and
    service rate 1/n - 1/(4n^2)."""

    n: int

    def params(self) -> SystemParams:
        m = 2 * self.n
        lam = np.full(m, 1.0 / m)
        mu = np.full(m, 1.0 / self.n - 1.0 / (4.0 * self.n**2))
        return SystemParams(lam, mu)


class CounterexampleBundle:
    """Deterministic synchronized schedule.

    Stage 1 of each window: the queues of pair p (0-based queues 2p, 2p+1)
    both target server (2p + t + 1) mod N at round t; stage 2: queue q
    targets server (q + t) mod N, so all queues hit distinct servers.  An
    optional deviant queue instead plays i.i.d. draws from a fixed
    distribution via its private stream.
    """

    def __init__(self, cfg: CounterexampleConfig, deviant: int | None = None, deviant_dist=None):
        self.cfg = cfg
        self.deviant = deviant
        if deviant is not None:
            p = np.asarray(deviant_dist, dtype=float)
            if p.ndim != 1 or np.any(p < 0.0) or not math.isclose(p.sum(), 1.0, abs_tol=1e-9):
                raise ValueError("deviant distribution must be nonnegative and sum to 1")
            self.deviant_cum = np.cumsum(p)

    def setup(self, params: SystemParams, streams: EpisodeStreams) -> None:
        if params.n_queues != self.cfg.n_queues:
            raise ValueError("params do not match the configured instance")
        self.params = params
        self.private = streams.private
        self._k = 1
        self._window_start = 1
        self._stage1_end = math.ceil(self.cfg.alpha * self.cfg.window_length(1))

    def _advance_window(self, t: int) -> None:
        while t >= self._window_start + self.cfg.window_length(self._k):
            self._window_start += self.cfg.window_length(self._k)
            self._k += 1
            self._stage1_end = math.ceil(self.cfg.alpha * self.cfg.window_length(self._k))

    def decide_round(self, t: int, state: EnvState) -> list[Decision]:
        self._advance_window(t)
        n = self.cfg.n_queues
        stage1 = (t - self._window_start + 1) <= self._stage1_end
        decisions = []
        for q in range(n):
            if self.deviant == q:
                server = int(np.searchsorted(self.deviant_cum, self.private[q].random(), side="right"))
                server = min(server, n - 1)
            elif stage1:
                server = (2 * (q // 2) + t + 1) % n
            else:
                server = (q + t) % n
            decisions.append(
                Decision(server=server, packet=OLDEST, purpose=EXPLOIT) if state.buffers[q] else IDLE
            )
        return decisions

    def observe_round(self, t, decisions, outcome, arrived) -> None:
        pass

    def explored_flags(self):
        return None

    def final_report(self) -> dict:
        return {}


def counterexample_policy(cfg: CounterexampleConfig) -> CounterexampleBundle:
    """Joint decision source for the synchronized-schedule family."""
    return CounterexampleBundle(cfg)


@dataclass
class DeviationReport:
    """Paired per-window cleared-packet comparison for one focal queue.

    ``compliant``/``deviant`` have shape (n_seeds, n_windows); windows are
    those fully contained in the horizon.
    """

    windows: list[int]
    seeds: list[int]
    compliant: np.ndarray
    deviant: np.ndarray

    @property
    def difference(self) -> np.ndarray:
        return self.deviant - self.compliant

    def summary(self, last_windows: int | None = None) -> dict:
        """Mean paired difference and its standard error over the chosen
        trailing windows (per-seed means are the pairing unit)."""
        if self.compliant.size == 0:
            return {"mean_diff": 0.0, "stderr": 0.0, "windows": []}
        sel = slice(None) if last_windows is None else slice(-last_windows, None)
        per_seed = self.difference[:, sel].mean(axis=1)
        n = per_seed.size
        stderr = float(per_seed.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return {
            "mean_diff": float(per_seed.mean()),
            "stderr": stderr,
            "windows": list(self.windows[sel] if last_windows else self.windows),
        }


def _window_cleared(traj: Trajectory, queue: int, boundaries: list[int]) -> np.ndarray:
    """Packets cleared by ``queue`` within each window (full-stride data)."""
    cum = traj.cleared_cum[:, queue]
    out = []
    prev = 0
    for w in boundaries:
        out.append(cum[w - 1] - prev)
        prev = cum[w - 1]
    return np.array(out, dtype=float)


def deviation_experiment(
    cfg: CounterexampleConfig,
    deviant: int,
    dist,
    horizon: int,
    seeds: list[int],
) -> DeviationReport:
    """Run paired episodes (identical seeds and environment streams) with
    and without the focal queue deviating to a fixed distribution, and
    report its per-window cleared counts in both arms."""
    params = cfg.params()
    if not 0 <= deviant < params.n_queues:
        raise ValueError("deviant queue out of range")
    boundaries = cfg.window_boundaries(horizon)
    compliant = np.zeros((len(seeds), len(boundaries)))
    deviated = np.zeros((len(seeds), len(boundaries)))
    for s, seed in enumerate(seeds):
        base = run_episode(params, CounterexampleBundle(cfg), horizon, seed)
        dev = run_episode(params, CounterexampleBundle(cfg, deviant, dist), horizon, seed)
        if boundaries:
            compliant[s] = _window_cleared(base, deviant, boundaries)
            deviated[s] = _window_cleared(dev, deviant, boundaries)
    return DeviationReport(boundaries, list(seeds), compliant, deviated)
