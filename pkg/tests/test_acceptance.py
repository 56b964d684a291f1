"""Acceptance gate: every criterion at its stated tolerance, one line each.

Run with ``pytest tests/test_acceptance.py -v -s``.  The heavy system runs
(criteria 6-10) take several minutes each at their full stated scale.
"""

import itertools
import math

import numpy as np
import pytest

from decqueue.adequa import ExplorationSchedule, adequa_bundle
from decqueue.baselines import CounterexampleBundle, CounterexampleConfig, deviation_experiment
from decqueue.birkhoff import (
    disagreement_volume,
    draw_cost_matrix,
    hungarian,
    ordered_birkhoff,
)
from decqueue.harness import parse_config, preset_instance, random_bistochastic, run_experiment
from decqueue.mapping import SQRT_E, PhiConfig, compute_phi, empirical_margin, verify_domination
from decqueue.model import compute_margin, compute_slack, run_episode

RUN_PHI = {"max_outer_iters": 10, "dykstra_iters": 20, "target_gap": 1e-3, "refresh_threshold": 0.0075}


def report(criterion: str, detail: str) -> None:
    print(f"\n[PASS] {criterion}: {detail}")


def experiment_doc(preset, policies, horizon, seeds, stride=100, schedule=None):
    return {
        "instance": {"preset": preset},
        "policies": policies,
        "horizon": horizon,
        "seeds": seeds,
        "schedule": schedule or {"x": 8.0, "alpha": 0.25},
        "phi": dict(RUN_PHI),
        "record_stride": stride,
    }


def mean_curve(cfg):
    """Mean queue length over queues and seeds at the recorded times."""
    from concurrent.futures import ProcessPoolExecutor

    from decqueue.harness import _run_seed

    with ProcessPoolExecutor(max_workers=2) as pool:
        trajs = list(pool.map(_run_seed, [cfg] * len(cfg.seeds), cfg.seeds))
    times = trajs[0].times
    curve = np.stack([t.q.mean(axis=1) for t in trajs]).mean(axis=0)
    return times, curve, trajs


def test_criterion_01_birkhoff_suite():
    rng = np.random.default_rng(101)
    worst_recon = 0.0
    for k in range(2, 7):
        for _ in range(1000):
            P = random_bistochastic(rng, k)
            C = draw_cost_matrix(rng, k)
            dec = ordered_birkhoff(P, C)
            recon = float(np.abs(dec.reconstruct() - P).max())
            worst_recon = max(worst_recon, recon)
            assert recon <= 1e-8
            assert len(dec) <= k * k
            assert dec.weights.min() > 0.0
            assert abs(dec.weights.sum() - 1.0) <= 1e-9
            assert np.all(np.diff(dec.costs(C)) > 0.0)
    report(
        "criterion 1 (ordered decomposition structure)",
        f"5000 matrices, K in 2..6, worst reconstruction error {worst_recon:.2e}",
    )


def test_criterion_02_hungarian_oracle_equivalence():
    rng = np.random.default_rng(202)
    checked = 0
    for k in range(2, 8):
        perms = list(itertools.permutations(range(k)))
        rows = np.arange(k)
        for _ in range(500):
            C = rng.random((k, k))
            ours = hungarian(C)
            costs = [C[rows, list(p)].sum() for p in perms]
            oracle = perms[int(np.argmin(costs))]
            assert ours == oracle
            checked += 1
    report("criterion 2 (min-cost matching vs enumeration)", f"{checked} cost matrices matched exactly")


def test_criterion_03_phi_feasibility():
    params, _ = preset_instance("easy-fig3")
    margin = compute_margin(params)
    out = compute_phi(params.lam, params.mu)
    margins = verify_domination(out, params.lam, params.mu)
    assert margins.min() >= margin / SQRT_E - 1e-3
    rng = np.random.default_rng(303)
    done = 0
    worst_slack = math.inf
    while done < 100:
        k = int(rng.integers(2, 7))
        lam = rng.uniform(0.05, 0.6, size=k)
        mu = np.clip(lam * rng.uniform(1.1, 2.5) + rng.uniform(0.0, 0.25, size=k), 0.0, 1.0)
        d_hat = empirical_margin(lam, mu)
        if d_hat <= 0.0:
            continue
        out = compute_phi(lam, mu)
        slack = float(verify_domination(out, lam, mu).min() - (d_hat / SQRT_E - 1e-3))
        worst_slack = min(worst_slack, slack)
        assert slack >= 0.0, f"margin short by {slack} on lam={lam}, mu={mu}"
        done += 1
    report(
        "criterion 3 (allocation feasibility margins)",
        f"easy instance + 100 random instances, worst slack {worst_slack:.2e}",
    )


def test_criterion_04_phi_continuity():
    params, _ = preset_instance("easy-fig3")
    delta = compute_margin(params)
    k = params.n_servers
    exact = compute_phi(params.lam, params.mu)
    rng = np.random.default_rng(404)
    worst = -math.inf
    for _ in range(200):
        d = rng.uniform(-1.0, 1.0, size=8) * 0.01 * delta
        lam_p = np.clip(params.lam + d[:4], 0.0, 1.0)
        mu_p = np.clip(params.mu + d[4:], 0.0, 1.0)
        dev = max(np.abs(lam_p - params.lam).max(), np.abs(mu_p - params.mu).max())
        out = compute_phi(lam_p, mu_p)
        lhs = float(np.linalg.norm(out - exact))
        rhs = 14.0 * k / delta * dev + 10.0 * 1e-4
        worst = max(worst, lhs - rhs)
        assert lhs <= rhs
    report("criterion 4 (allocation continuity)", f"200 perturbations, worst lhs-rhs {worst:.2e}")


def test_criterion_05_sampler_continuity():
    rng = np.random.default_rng(505)
    small_cases = 0
    for k in (2, 3):
        bound = 2 ** (2 * k * k)
        for _ in range(500):
            P = random_bistochastic(rng, k)
            Q = random_bistochastic(rng, k)
            C = draw_cost_matrix(rng, k)
            eps = 10 ** rng.uniform(-6.5, -1.0)
            P2 = (1.0 - eps) * P + eps * Q
            gap = float(np.abs(P - P2).max())
            vol = disagreement_volume(ordered_birkhoff(P, C), ordered_birkhoff(P2, C))
            assert vol <= bound * gap + 1e-12
            if gap <= 1e-4:
                small_cases += 1
                assert vol <= 0.05
    assert small_cases >= 100
    report(
        "criterion 5 (sampler continuity)",
        f"1000 perturbed pairs, {small_cases} with sup-gap <= 1e-4 all below 0.05 disagreement",
    )


def test_criterion_06_hard_instance_separation():
    params, _ = preset_instance("hard-fig2")
    assert compute_slack(params) == pytest.approx(1.25)
    horizon = 200_000
    seeds = list(range(1, 11))

    cfg = parse_config(experiment_doc("hard-fig2", ["exp3"] * 4, horizon, seeds))
    times, curve, _ = mean_curve(cfg)
    first = curve[times <= 0.1 * horizon].mean()
    final = curve[times >= 0.9 * horizon].mean()
    half = times >= 0.5 * horizon
    exp3_slope = float(np.polyfit(times[half], curve[half], 1)[0])
    assert final >= 5.0 * first
    assert exp3_slope >= 0.001

    cfg = parse_config(experiment_doc("hard-fig2", ["adequa"] * 4, horizon, seeds))
    times, curve, _ = mean_curve(cfg)
    middle = curve[(times >= 0.45 * horizon) & (times <= 0.55 * horizon)].mean()
    final_a = curve[times >= 0.9 * horizon].mean()
    half = times >= 0.5 * horizon
    adequa_slope = float(np.polyfit(times[half], curve[half], 1)[0])
    assert final_a <= 1.5 * middle
    assert adequa_slope <= 1e-4
    report(
        "criterion 6 (hard instance separation)",
        f"exp3 grows (final/first {final / first:.1f}, slope {exp3_slope:.4f}); "
        f"adequa plateaus (final/middle {final_a / middle:.2f}, slope {adequa_slope:.5f})",
    )


def test_criterion_07_easy_instance_stability():
    horizon = 100_000
    seeds = list(range(1, 11))
    details = []
    for policy in ("exp3", "adequa"):
        cfg = parse_config(experiment_doc("easy-fig3", [policy] * 4, horizon, seeds))
        times, curve, _ = mean_curve(cfg)
        middle = curve[(times >= 0.45 * horizon) & (times <= 0.55 * horizon)].mean()
        final = curve[times >= 0.9 * horizon].mean()
        half = times >= 0.5 * horizon
        slope = float(np.polyfit(times[half], curve[half], 1)[0])
        assert final <= 1.5 * middle
        assert slope <= 1e-4
        details.append(f"{policy} final/middle {final / middle:.2f}, slope {slope:.6f}")
    report("criterion 7 (easy instance stability)", "; ".join(details))


def test_criterion_08_counterexample_instability():
    cfg = CounterexampleConfig(10, 2, 0.8)
    assert cfg.unstable_regime
    params = cfg.params()
    horizon = 22140
    boundaries = cfg.window_boundaries(horizon)
    assert len(boundaries) == 40
    rate = 2.0 * (cfg.alpha * (10 - 2) - (10 - 4)) / 100.0
    totals = np.zeros((10, len(boundaries)))
    for s, seed in enumerate(range(1, 11)):
        traj = run_episode(params, CounterexampleBundle(cfg), horizon, seed)
        q_tot = traj.q.sum(axis=1)
        totals[s] = [q_tot[w - 1] for w in boundaries]
    mean_tot = totals.mean(axis=0)
    margins = []
    for k in range(20, 41):
        need = 0.5 * rate * boundaries[k - 1]
        assert mean_tot[k - 1] >= need, f"window {k}: {mean_tot[k - 1]:.1f} < {need:.1f}"
        margins.append(mean_tot[k - 1] / need)
    report(
        "criterion 8 (synchronized schedule instability)",
        f"all windows k>=20 above threshold; min ratio to bound {min(margins):.1f}x",
    )


def test_criterion_09_counterexample_deviation():
    cfg = CounterexampleConfig(10, 2, 0.8)
    assert cfg.no_policy_regret_regime
    rep = deviation_experiment(cfg, 0, [0.1] * 10, 22140, list(range(1, 21)))
    s = rep.summary(last_windows=10)
    assert s["mean_diff"] <= 2.0 * s["stderr"], s
    report(
        "criterion 9 (deviation does not help)",
        f"paired mean diff {s['mean_diff']:.2f} cleared/window vs +2se = {2 * s['stderr']:.2f}",
    )


def test_criterion_10_estimator_consistency():
    params, _ = preset_instance("easy-fig3")
    sched = ExplorationSchedule(scale=1e9, exponent=0.25)  # forces eps_t = 1
    mu_errs, lam_errs = [], []
    for seed in range(1, 21):
        bundle = adequa_bundle(params, sched, PhiConfig(**RUN_PHI))
        traj = run_episode(params, bundle, 100_000, seed, record_stride=100_000)
        reports = traj.final["queues"]
        mu_errs.append(np.stack([np.abs(r["mu_hat"] - params.mu) for r in reports]))
        lam_errs.append(np.stack([np.abs(r["lambda_hat"] - params.lam) for r in reports]))
    # per-coordinate absolute error averaged over the 20 seeds, then the
    # worst coordinate
    mu_err = float(np.stack(mu_errs).mean(axis=0).max())
    lam_err = float(np.stack(lam_errs).mean(axis=0).max())
    assert mu_err <= 0.02
    assert lam_err <= 0.05
    report(
        "criterion 10 (estimator consistency under forced exploration)",
        f"max_ik E|mu_hat - mu| = {mu_err:.4f} <= 0.02; max_ij E|lambda_hat - lambda| = {lam_err:.4f} <= 0.05",
    )


def test_criterion_11_determinism(tmp_path):
    doc = experiment_doc("easy-fig3", ["adequa"] * 4, 2000, [5, 6], stride=10)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    run_experiment(parse_config(doc, out_dir=out1), max_workers=1)
    run_experiment(parse_config(doc, out_dir=out2), max_workers=2)
    for name in ("trajectory_seed5.csv", "trajectory_seed6.csv", "aggregate.csv", "summary.json"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    report("criterion 11 (determinism)", "byte-identical artifacts across repeated and parallel runs")
