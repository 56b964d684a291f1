from collections import deque

import numpy as np
import pytest

from decqueue.adequa import (
    AdequaQueue,
    ExplorationSchedule,
    PerQueueBundle,
    QueueEstimates,
    SharedDraws,
    adequa_bundle,
    berger_opponent,
    decide,
    draw_shared,
    epsilon,
    mu_tilde,
    observe_arrival,
    refresh_allocation,
    update_after_round,
)
from decqueue.birkhoff import draw_cost_matrix
from decqueue.mapping import PhiConfig
from decqueue.model import EXPLOIT, EXPLORE_LAMBDA, EXPLORE_MU, Decision, SystemParams, run_episode

PARAMS44 = SystemParams(np.full(4, 0.3), np.full(4, 0.8))
SCHED44 = ExplorationSchedule(scale=8.0, exponent=0.25)


def estimates_for(params):
    return QueueEstimates.initial(params.n_queues, params.n_servers)


def exploit_draws(omega=0.5):
    return SharedDraws(explore=False, omega=omega)


class TestEpsilon:
    def test_practical_exponent(self):
        assert epsilon(SCHED44, 65536) == pytest.approx(0.5)

    def test_clipped_at_one(self):
        assert epsilon(ExplorationSchedule(scale=3.0), 1) == 1.0

    def test_theory_exponent(self):
        sched = ExplorationSchedule(scale=8.0, exponent=0.2)
        assert epsilon(sched, 8**5) == pytest.approx(1.0)
        assert epsilon(sched, 32**5) == pytest.approx(0.25)


class TestBergerOpponent:
    def test_residue_one_round_pairs(self):
        # 4 queues, round residue 1: pairs are (queue 0, queue 2) and (1, 3)
        assert berger_opponent(0, 1, 4) == 2
        assert berger_opponent(2, 1, 4) == 0
        assert berger_opponent(1, 1, 4) == 3
        assert berger_opponent(3, 1, 4) == 1

    def test_two_queues_always_paired(self):
        for r in (1, 2):
            assert berger_opponent(0, r, 2) == 1
            assert berger_opponent(1, r, 2) == 0

    def test_odd_count_gives_bye(self):
        # with 3 queues, queue index 1 meets the phantom seat in the
        # residue-1 round
        assert berger_opponent(1, 1, 3) is None

    def test_draws_above_round_count_are_reduced(self):
        # r=4 with 4 queues reduces onto round 1
        for q in range(4):
            assert berger_opponent(q, 4, 4) == berger_opponent(q, 1, 4)

    @pytest.mark.parametrize("n", [2, 3, 4, 5, 6, 7, 8])
    def test_schedule_is_a_tournament(self, n):
        n_pos = n + (n % 2)
        rounds = n_pos - 1
        meetings = {}
        for r in range(1, rounds + 1):
            seen = set()
            for q in range(n):
                j = berger_opponent(q, r, n)
                if j is None:
                    continue
                assert berger_opponent(j, r, n) == q  # symmetry
                assert j != q
                seen.add(q)
                pair = (min(q, j), max(q, j))
                assert meetings.get(pair) in (None, r) or meetings[pair] != r
                meetings.setdefault(pair, r)
            byes = n - len(seen)
            assert byes == (1 if n % 2 else 0)
        # every unordered pair meets exactly once across the rounds
        assert len(meetings) == n * (n - 1) // 2


class TestSharedDraws:
    def test_consumption_order_and_presence(self):
        rng = np.random.default_rng(0)
        sched = ExplorationSchedule(scale=1.5, exponent=0.25)
        seen_mu = seen_lam = seen_exploit = False
        for t in range(1, 500):
            d = draw_shared(rng, t, sched, 4, 4)
            if not d.explore:
                assert d.n is None and d.r is None and d.l is None
                seen_exploit = True
            elif d.n <= 4:
                assert d.r is None and d.l is None
                seen_mu = True
            else:
                assert 1 <= d.r <= 4 and 1 <= d.l <= 4
                seen_lam = True
        assert seen_mu and seen_lam and seen_exploit

    def test_identically_seeded_streams_agree(self):
        streams = [np.random.default_rng(123) for _ in range(4)]
        for t in range(1, 200):
            draws = [draw_shared(s, t, SCHED44, 4, 4) for s in streams]
            assert all(d == draws[0] for d in draws)


class TestDecide:
    def setup_method(self):
        self.cost = draw_cost_matrix(np.random.default_rng(1), 4)
        self.cfg = PhiConfig(max_outer_iters=20, dykstra_iters=30)

    def _decide(self, queue, buffer, draws, est=None):
        est = est or estimates_for(PARAMS44)
        return decide(5, queue, buffer, est, draws, PARAMS44, self.cfg, self.cost)

    def test_exploit_empty_buffer_idles(self):
        d = self._decide(0, deque(), exploit_draws())
        assert d.server is None

    def test_mu_exploration_server_formula(self):
        # draw n=2 for the queue with 1-based id 3: server (2+3 mod 4)+1 = 2
        draws = SharedDraws(explore=True, omega=0.1, n=2)
        d = self._decide(2, deque([4]), draws)
        assert d.purpose == EXPLORE_MU
        assert d.server == 1
        assert d.packet == "oldest"

    def test_mu_exploration_with_empty_buffer_idles(self):
        draws = SharedDraws(explore=True, omega=0.1, n=2)
        assert self._decide(2, deque(), draws).server is None

    def test_lambda_exploration_pair_formula(self):
        # n=7 > K; 1-based queue 1 meets queue 3 in the residue-1 round;
        # l=2 gives server (2+1 mod 4)+1 = 4; sends only a this-round packet
        draws = SharedDraws(explore=True, omega=0.1, n=7, r=1, l=2)
        d = self._decide(0, deque([3, 5]), draws)
        assert d.purpose == EXPLORE_LAMBDA
        assert d.target == 2
        assert d.server == 3
        assert d.packet == "newest"

    def test_lambda_exploration_requires_fresh_packet(self):
        draws = SharedDraws(explore=True, omega=0.1, n=7, r=1, l=2)
        assert self._decide(0, deque([3, 4]), draws).server is None
        assert self._decide(0, deque(), draws).server is None

    def test_lambda_exploration_bye_idles(self):
        params = SystemParams(np.full(3, 0.3), np.full(3, 0.8))
        est = estimates_for(params)
        draws = SharedDraws(explore=True, omega=0.1, n=7, r=1, l=2)
        d = decide(5, 1, deque([5]), est, draws, params, self.cfg, draw_cost_matrix(np.random.default_rng(2), 3))
        assert d.server is None

    def test_mu_exploration_collision_free(self):
        for n_queues in range(2, 9):
            for n_servers in range(n_queues, 9):
                params = SystemParams(np.full(n_queues, 0.3), np.full(n_servers, 0.8))
                est = [estimates_for(params) for _ in range(n_queues)]
                cost = draw_cost_matrix(np.random.default_rng(3), n_servers)
                for n in range(1, n_servers + 1):
                    draws = SharedDraws(explore=True, omega=0.1, n=n)
                    servers = [
                        decide(2, q, deque([2]), est[q], draws, params, self.cfg, cost).server
                        for q in range(n_queues)
                    ]
                    assert len(set(servers)) == n_queues

    def test_lambda_exploration_isolated_pairs(self):
        for n_queues in range(2, 9):
            for n_servers in range(n_queues, 9):
                params = SystemParams(np.full(n_queues, 0.3), np.full(n_servers, 0.8))
                est = [estimates_for(params) for _ in range(n_queues)]
                cost = draw_cost_matrix(np.random.default_rng(4), n_servers)
                n = n_servers + 1
                for r in range(1, n_queues + 1):
                    for l in range(1, n_servers + 1):
                        draws = SharedDraws(explore=True, omega=0.1, n=n, r=r, l=l)
                        t = 6
                        decisions = [
                            decide(t, q, deque([t]), est[q], draws, params, self.cfg, cost)
                            for q in range(n_queues)
                        ]
                        pair_servers = {}
                        for q, d in enumerate(decisions):
                            if d.server is None:
                                continue
                            pair = (min(q, d.target), max(q, d.target))
                            pair_servers.setdefault(pair, set()).add(d.server)
                        # both members of a pair send to one common server
                        assert all(len(s) == 1 for s in pair_servers.values())
                        # distinct pairs never share a server
                        all_servers = [next(iter(s)) for s in pair_servers.values()]
                        assert len(set(all_servers)) == len(all_servers)

    def test_exploit_applies_shared_permutation(self):
        # identical estimates => identical allocation => the shared draw
        # assigns distinct servers to distinct queues
        ests = [estimates_for(PARAMS44) for _ in range(4)]
        for e in ests:
            e.lambda_hat = np.full(4, 0.3)
            e.mu_hat = np.full(4, 0.8)
            e.pull_counts = np.full(4, 10)
        for omega in (0.05, 0.35, 0.75, 0.95):
            servers = [
                self._decide(q, deque([2]), exploit_draws(omega), est=ests[q]).server
                for q in range(4)
            ]
            assert sorted(servers) == [0, 1, 2, 3]


class TestUpdateAfterRound:
    def test_mu_tilde_weights_by_pull_counts(self):
        est = estimates_for(PARAMS44)
        est.pull_counts = np.array([3, 1, 0, 0])
        est.mu_hat = np.array([0.6, 0.2, 0.0, 0.0])
        assert mu_tilde(est) == pytest.approx(0.5)
        assert mu_tilde(estimates_for(PARAMS44)) == 0.0

    def test_eq2_substitution(self):
        est = estimates_for(PARAMS44)
        est.pull_counts = np.array([1, 1, 0, 0])
        est.mu_hat = np.array([0.5, 0.5, 0.0, 0.0])
        # craft S_j = 0.4 after update: start at 0.8 with one observation,
        # then a miss gives (0.8 + 0)/2 = 0.4
        est.s_counts[1] = 1
        est.s_hat[1] = 0.8
        d = Decision(server=0, packet="newest", purpose=EXPLORE_LAMBDA, target=1)
        update_after_round(est, 0, d, cleared=False)
        assert est.s_hat[1] == pytest.approx(0.4)
        assert est.lambda_hat[1] == pytest.approx(2 - 2 * 0.4 / 0.5)

    def test_s_equal_mu_tilde_gives_zero(self):
        est = estimates_for(PARAMS44)
        est.pull_counts = np.array([2, 0, 0, 0])
        est.mu_hat = np.array([0.5, 0.0, 0.0, 0.0])
        est.s_counts[3] = 1
        est.s_hat[3] = 1.0
        d = Decision(server=0, packet="newest", purpose=EXPLORE_LAMBDA, target=3)
        update_after_round(est, 0, d, cleared=False)  # S becomes 0.5 = mu_tilde
        assert est.lambda_hat[3] == pytest.approx(0.0)

    def test_clamped_at_zero(self):
        est = estimates_for(PARAMS44)
        est.pull_counts = np.array([2, 0, 0, 0])
        est.mu_hat = np.array([0.5, 0.0, 0.0, 0.0])
        est.s_counts[1] = 4
        est.s_hat[1] = 0.65
        d = Decision(server=0, packet="newest", purpose=EXPLORE_LAMBDA, target=1)
        update_after_round(est, 0, d, cleared=True)  # S -> 0.72, raw lambda < 0
        assert est.lambda_hat[1] == 0.0

    def test_mu_update_running_mean(self):
        est = estimates_for(PARAMS44)
        d = Decision(server=2, purpose=EXPLORE_MU)
        update_after_round(est, 0, d, cleared=True)
        update_after_round(est, 0, d, cleared=False)
        assert est.pull_counts[2] == 2
        assert est.mu_hat[2] == pytest.approx(0.5)
        assert est.dirty

    def test_lambda_left_initial_without_mu_pulls(self):
        est = estimates_for(PARAMS44)
        d = Decision(server=0, packet="newest", purpose=EXPLORE_LAMBDA, target=1)
        update_after_round(est, 0, d, cleared=True)
        assert est.lambda_hat[1] == 1.0  # initial value kept while mu_tilde = 0

    def test_exploit_and_idle_do_not_touch_estimates(self):
        est = estimates_for(PARAMS44)
        est.dirty = False
        update_after_round(est, 0, Decision(server=1, purpose=EXPLOIT), cleared=True)
        update_after_round(est, 0, Decision(server=None), cleared=False)
        assert not est.dirty
        assert est.pull_counts.sum() == 0


class TestCacheCoherence:
    def test_recompute_iff_estimates_changed(self):
        est = estimates_for(PARAMS44)
        cfg = PhiConfig(max_outer_iters=10, dykstra_iters=20)
        cost = draw_cost_matrix(np.random.default_rng(5), 4)
        assert refresh_allocation(est, 0, cfg, cost)  # first use computes
        assert not refresh_allocation(est, 0, cfg, cost)  # clean cache reused
        update_after_round(est, 0, Decision(server=1, purpose=EXPLORE_MU), cleared=True)
        assert refresh_allocation(est, 0, cfg, cost)  # dirty triggers recompute
        assert not refresh_allocation(est, 0, cfg, cost)

    def test_throttle_skips_small_drift(self):
        est = estimates_for(PARAMS44)
        cfg = PhiConfig(max_outer_iters=10, dykstra_iters=20, refresh_threshold=0.5)
        cost = draw_cost_matrix(np.random.default_rng(5), 4)
        assert refresh_allocation(est, 0, cfg, cost)
        update_after_round(est, 0, Decision(server=1, purpose=EXPLORE_MU), cleared=True)
        est.mu_hat[1] = 0.1  # small drift, below threshold
        assert not refresh_allocation(est, 0, cfg, cost)
        assert est.dirty  # estimates still marked as changed


class TestOwnRateTracking:
    def test_own_slot_updates_with_arrivals(self):
        est = estimates_for(PARAMS44)
        for arrived in (True, False, True, True):
            observe_arrival(est, arrived)
        update_after_round(est, 2, Decision(server=0, purpose=EXPLORE_MU), cleared=True)
        assert est.lambda_hat[2] == pytest.approx(0.75)

    def test_own_slot_untouched_without_estimate_updates(self):
        est = estimates_for(PARAMS44)
        observe_arrival(est, True)
        assert est.lambda_hat[2] == 1.0


class TestSynchronization:
    def test_all_queues_receive_identical_draws(self):
        params = SystemParams(np.array([0.3, 0.2]), np.array([0.8, 0.5]))
        bundle = adequa_bundle(params, phi_cfg=PhiConfig(max_outer_iters=10, dykstra_iters=20), record_draws=True)
        run_episode(params, bundle, 300, seed=9)
        assert len(bundle.draw_log) == 300

    def test_estimates_converge_with_forced_exploration(self):
        lam = np.array([0.45, 0.35, 0.25, 0.15])
        params = SystemParams(lam, 2.1 * lam)
        sched = ExplorationSchedule(scale=1000.0, exponent=0.01)  # effectively eps = 1
        bundle = adequa_bundle(params, sched, PhiConfig(max_outer_iters=10, dykstra_iters=20))
        traj = run_episode(params, bundle, 20000, seed=3)
        reports = traj.final["queues"]
        mu_err = max(np.abs(r["mu_hat"] - params.mu).max() for r in reports)
        lam_err = max(np.abs(r["lambda_hat"] - params.lam).max() for r in reports)
        assert mu_err <= 0.05
        assert lam_err <= 0.15
