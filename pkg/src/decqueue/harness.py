"""Batch experiment runner and property suites.

Loads JSON experiment configurations, fans seeds out to worker processes,
writes per-seed trajectory CSVs, an aggregate CSV, a native SVG chart and a
summary JSON, and hosts the randomized invariant suites used by the
acceptance gate.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baselines
from .adequa import AdequaQueue, ExplorationSchedule, PerQueueBundle, adequa_bundle, draw_shared
from .birkhoff import draw_cost_matrix, ordered_birkhoff
from .mapping import SQRT_E, PhiConfig, compute_phi, empirical_margin, verify_domination
from .model import SystemParams, Trajectory, compute_margin, run_episode


class ConfigError(Exception):
    """Invalid experiment configuration; ``path`` names the offending key."""

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class MalformedConfig(ConfigError):
    pass


class RateOutOfRange(ConfigError):
    pass


class UnknownPreset(ConfigError):
    pass


class LengthMismatch(ConfigError):
    pass


_COUNTEREXAMPLE_RE = re.compile(r"^counterexample\((\d+)\s*,\s*(\d+)\s*,\s*([0-9.eE+-]+)\)$")
_FIXED_RE = re.compile(r"^fixed\(([^)]*)\)$")

JOINT_POLICIES = ("centralized", "counterexample")


def preset_instance(name: str) -> tuple[SystemParams, baselines.CounterexampleConfig | None]:
    """Resolve a named instance preset to explicit rates."""
    if name == "hard-fig2":
        n = 4
        lam = np.full(n, (n + 1) / n**2)
        mu = np.array([1.0] + [(n - 1) / n**2] * (n - 1))
        return SystemParams(lam, mu), None
    if name == "easy-fig3":
        lam = np.array([0.55 - 0.1 * i for i in range(1, 5)])
        return SystemParams(lam, 2.1 * lam), None
    m = _COUNTEREXAMPLE_RE.match(name)
    if m:
        cfg = baselines.CounterexampleConfig(int(m.group(1)), int(m.group(2)), float(m.group(3)))
        return cfg.params(), cfg
    raise UnknownPreset(f"unknown preset {name!r}", "instance.preset")


@dataclass
class ExperimentConfig:
    """One batch experiment: an instance, a policy per queue, horizon,
    seeds, exploration schedule, solver budgets and output layout."""

    params: SystemParams
    policies: list[str]
    horizon: int
    seeds: list[int]
    schedule: ExplorationSchedule
    phi: PhiConfig
    record_stride: int = 100
    out_dir: Path | None = None
    counterexample: baselines.CounterexampleConfig | None = None
    preset: str | None = None

    def policy_of(self, queue: int) -> str:
        name = self.policies[queue]
        return "fixed" if name.startswith("fixed(") else name


def _require(doc: dict, key: str, path: str):
    if key not in doc:
        raise MalformedConfig(f"missing key {key!r}", path)
    return doc[key]


def _rates(raw, path: str) -> np.ndarray:
    if not isinstance(raw, list) or not raw:
        raise MalformedConfig("expected a non-empty list of rates", path)
    vals = []
    for i, v in enumerate(raw):
        if not isinstance(v, (int, float)):
            raise MalformedConfig("rate is not a number", f"{path}[{i}]")
        if not 0.0 <= v <= 1.0:
            raise RateOutOfRange(f"rate {v} outside [0, 1]", f"{path}[{i}]")
        vals.append(float(v))
    return np.array(vals)


def parse_config(doc: dict, out_dir: Path | None = None) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise MalformedConfig("top-level document must be an object", "")
    instance = _require(doc, "instance", "")
    counterexample = None
    preset = None
    if not isinstance(instance, dict):
        raise MalformedConfig("instance must be an object", "instance")
    if "preset" in instance:
        preset = instance["preset"]
        if not isinstance(preset, str):
            raise MalformedConfig("preset must be a string", "instance.preset")
        params, counterexample = preset_instance(preset)
    else:
        lam = _rates(_require(instance, "lambda", "instance"), "instance.lambda")
        mu = _rates(_require(instance, "mu", "instance"), "instance.mu")
        params = SystemParams(lam, mu)

    policies = _require(doc, "policies", "")
    if not isinstance(policies, list) or not all(isinstance(p, str) for p in policies):
        raise MalformedConfig("policies must be a list of strings", "policies")
    if len(policies) != params.n_queues:
        raise LengthMismatch(
            f"{len(policies)} policies for {params.n_queues} queues", "policies"
        )
    joint = [p for p in policies if p in JOINT_POLICIES]
    if joint and len(set(policies)) != 1:
        raise MalformedConfig("joint policies cannot be mixed with per-queue policies", "policies")
    for i, p in enumerate(policies):
        if p in JOINT_POLICIES or p in ("adequa", "exp3"):
            continue
        m = _FIXED_RE.match(p)
        if not m:
            raise MalformedConfig(f"unknown policy {p!r}", f"policies[{i}]")
        dist = [float(x) for x in m.group(1).split(",")]
        if len(dist) != params.n_servers:
            raise LengthMismatch(
                f"fixed distribution has {len(dist)} entries for {params.n_servers} servers",
                f"policies[{i}]",
            )
    if "counterexample" in policies and counterexample is None:
        raise MalformedConfig(
            "counterexample policy requires the counterexample(...) preset", "policies"
        )

    horizon = _require(doc, "horizon", "")
    if not isinstance(horizon, int) or horizon < 0:
        raise MalformedConfig("horizon must be a nonnegative integer", "horizon")
    seeds = _require(doc, "seeds", "")
    if not isinstance(seeds, list) or not all(isinstance(s, int) for s in seeds):
        raise MalformedConfig("seeds must be a list of integers", "seeds")

    sched_doc = doc.get("schedule", {})
    if not isinstance(sched_doc, dict):
        raise MalformedConfig("schedule must be an object", "schedule")
    scale = sched_doc.get("x", float(params.n_queues + params.n_servers))
    exponent = sched_doc.get("alpha", 0.25)
    try:
        schedule = ExplorationSchedule(float(scale), float(exponent))
    except (TypeError, ValueError) as exc:
        raise MalformedConfig(str(exc), "schedule") from exc

    phi_doc = doc.get("phi", {})
    if not isinstance(phi_doc, dict):
        raise MalformedConfig("phi must be an object", "phi")
    try:
        phi = PhiConfig(
            max_outer_iters=int(phi_doc.get("max_outer_iters", 200)),
            dykstra_iters=int(phi_doc.get("dykstra_iters", 100)),
            target_gap=float(phi_doc.get("target_gap", 1e-4)),
            refresh_threshold=float(phi_doc.get("refresh_threshold", 0.0)),
        )
    except (TypeError, ValueError) as exc:
        raise MalformedConfig(str(exc), "phi") from exc

    stride = doc.get("record_stride", 100)
    if not isinstance(stride, int) or stride < 1:
        raise MalformedConfig("record_stride must be a positive integer", "record_stride")

    return ExperimentConfig(
        params=params,
        policies=list(policies),
        horizon=horizon,
        seeds=list(seeds),
        schedule=schedule,
        phi=phi,
        record_stride=stride,
        out_dir=out_dir,
        counterexample=counterexample,
        preset=preset,
    )


def load_config(path: str | Path, out_dir: Path | None = None) -> ExperimentConfig:
    """Parse the JSON experiment document at ``path``."""
    p = Path(path)
    if not p.exists():
        raise MalformedConfig(f"no such file: {p}", "")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise MalformedConfig(f"invalid JSON: {exc}", "") from exc
    return parse_config(doc, out_dir=out_dir)


def make_bundle(cfg: ExperimentConfig):
    """Fresh policy bundle for one episode of this experiment."""
    first = cfg.policies[0]
    if first == "centralized":
        return baselines.CentralizedBundle(cfg.phi)
    if first == "counterexample":
        return baselines.CounterexampleBundle(cfg.counterexample)
    policies = []
    for name in cfg.policies:
        if name == "adequa":
            policies.append(AdequaQueue(cfg.phi))
        elif name == "exp3":
            policies.append(baselines.Exp3Queue())
        else:
            dist = [float(x) for x in _FIXED_RE.match(name).group(1).split(",")]
            policies.append(baselines.FixedQueue(dist))
    return PerQueueBundle(policies, cfg.schedule)


def _run_seed(cfg: ExperimentConfig, seed: int) -> Trajectory:
    return run_episode(cfg.params, make_bundle(cfg), cfg.horizon, seed, cfg.record_stride)


@dataclass
class RunSummary:
    """Statistics recomputable from the emitted CSVs, plus per-seed
    estimator reports for strategy runs."""

    per_queue_time_avg_q: list[float]
    per_queue_final_decile_q: list[float]
    growth_rate: float
    moment_q_final: dict
    estimator_errors: dict | None
    seeds: list[int]
    policies: list[str]

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def write_trajectory_csv(path: Path, traj: Trajectory) -> None:
    rows = ["t,queue,Q,cleared_cum,arrived_cum,explored"]
    n = traj.q.shape[1] if traj.q.size else 0
    for s, t in enumerate(traj.times):
        for i in range(n):
            rows.append(
                f"{t},{i},{traj.q[s, i]},{traj.cleared_cum[s, i]},"
                f"{traj.arrived_cum[s, i]},{traj.explored[s, i]}"
            )
    path.write_text("\n".join(rows) + "\n")


def write_aggregate_csv(path: Path, times: np.ndarray, series: dict[str, tuple[np.ndarray, np.ndarray]]) -> None:
    rows = ["t,policy,mean_Q,std_Q"]
    for name in sorted(series):
        mean, std = series[name]
        for s, t in enumerate(times):
            rows.append(f"{t},{name},{_fmt(mean[s])},{_fmt(std[s])}")
    path.write_text("\n".join(rows) + "\n")


_SVG_COLORS = ["#1f6fb2", "#d1495b", "#3e8e54", "#8d6a9f", "#c97b2d", "#4a4a4a"]


def write_svg_chart(path: Path, times: np.ndarray, series: dict[str, tuple[np.ndarray, np.ndarray]], title: str) -> None:
    """Native polyline chart of mean queue length vs time, one series per
    policy, linear axes, with a small legend."""
    width, height = 720, 420
    ml, mr, mt, mb = 70, 20, 36, 48
    plot_w, plot_h = width - ml - mr, height - mt - mb
    t_max = float(times[-1]) if times.size else 1.0
    y_max = max((float(m.max()) for m, _ in series.values() if m.size), default=1.0)
    y_max = max(y_max, 1e-9)

    def sx(t: float) -> float:
        return ml + plot_w * t / t_max

    def sy(y: float) -> float:
        return mt + plot_h * (1.0 - y / y_max)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14" '
        f'font-family="sans-serif">{title}</text>',
        f'<line x1="{ml}" y1="{mt + plot_h}" x2="{ml + plot_w}" y2="{mt + plot_h}" stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + plot_h}" stroke="black"/>',
        f'<text x="{ml + plot_w / 2:.1f}" y="{height - 12}" text-anchor="middle" '
        f'font-size="12" font-family="sans-serif">round</text>',
        f'<text x="16" y="{mt + plot_h / 2:.1f}" text-anchor="middle" font-size="12" '
        f'font-family="sans-serif" transform="rotate(-90 16 {mt + plot_h / 2:.1f})">mean queue length</text>',
    ]
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        tx = frac * t_max
        parts.append(
            f'<text x="{sx(tx):.1f}" y="{mt + plot_h + 16}" text-anchor="middle" '
            f'font-size="10" font-family="sans-serif">{tx:.0f}</text>'
        )
        ty = frac * y_max
        parts.append(
            f'<text x="{ml - 6}" y="{sy(ty) + 3:.1f}" text-anchor="end" '
            f'font-size="10" font-family="sans-serif">{ty:.3g}</text>'
        )
    for idx, name in enumerate(sorted(series)):
        mean, _ = series[name]
        color = _SVG_COLORS[idx % len(_SVG_COLORS)]
        pts = " ".join(f"{sx(float(t)):.2f},{sy(float(m)):.2f}" for t, m in zip(times, mean))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = mt + 14 + 16 * idx
        parts.append(f'<line x1="{ml + 8}" y1="{ly}" x2="{ml + 30}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        parts.append(
            f'<text x="{ml + 36}" y="{ly + 4}" font-size="11" font-family="sans-serif">{name}</text>'
        )
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n")


def run_experiment(cfg: ExperimentConfig, max_workers: int | None = None) -> RunSummary:
    """Execute all seeds (in parallel when possible), write artifacts when
    ``cfg.out_dir`` is set, and return the run statistics."""
    trajectories: list[Trajectory] = []
    if len(cfg.seeds) > 1 and (max_workers is None or max_workers > 1) and (os.cpu_count() or 1) > 1:
        workers = max_workers or min(len(cfg.seeds), os.cpu_count() or 1)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            trajectories = list(pool.map(_run_seed, [cfg] * len(cfg.seeds), cfg.seeds))
    else:
        trajectories = [_run_seed(cfg, seed) for seed in cfg.seeds]

    summary = summarize(cfg, trajectories)
    if cfg.out_dir is not None:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for seed, traj in zip(cfg.seeds, trajectories):
            write_trajectory_csv(out / f"trajectory_seed{seed}.csv", traj)
        if trajectories:
            times, series = aggregate_series(cfg, trajectories)
            write_aggregate_csv(out / "aggregate.csv", times, series)
            write_svg_chart(out / "chart.svg", times, series, title=cfg.preset or "experiment")
        (out / "summary.json").write_text(json.dumps(summary.to_json(), indent=2) + "\n")
    return summary


def aggregate_series(
    cfg: ExperimentConfig, trajectories: list[Trajectory]
) -> tuple[np.ndarray, dict[str, tuple[np.ndarray, np.ndarray]]]:
    """Mean and across-seed std of mean queue length per policy name."""
    times = trajectories[0].times
    names = sorted({cfg.policy_of(q) for q in range(cfg.params.n_queues)})
    series = {}
    for name in names:
        queues = [q for q in range(cfg.params.n_queues) if cfg.policy_of(q) == name]
        per_seed = np.stack([t.q[:, queues].mean(axis=1) for t in trajectories])
        series[name] = (per_seed.mean(axis=0), per_seed.std(axis=0))
    return times, series


def summarize(cfg: ExperimentConfig, trajectories: list[Trajectory]) -> RunSummary:
    n = cfg.params.n_queues
    if not trajectories or trajectories[0].times.size == 0:
        return RunSummary([0.0] * n, [0.0] * n, 0.0, {"r1": 0.0, "r2": 0.0}, None,
                          list(cfg.seeds), list(cfg.policies))
    times = trajectories[0].times
    q_all = np.stack([t.q for t in trajectories])  # (seeds, rows, queues)
    horizon = cfg.horizon
    final_decile = times >= 0.9 * horizon
    if not final_decile.any():
        final_decile = times == times[-1]
    final_half = times >= 0.5 * horizon

    time_avg = q_all.mean(axis=(0, 1))
    final_dec = q_all[:, final_decile, :].mean(axis=(0, 1))
    mean_curve = q_all.mean(axis=(0, 2))
    slope = 0.0
    if final_half.sum() >= 2:
        slope = float(np.polyfit(times[final_half], mean_curve[final_half], 1)[0])
    q_final = q_all[:, -1, :].astype(float)
    moments = {"r1": float(q_final.mean()), "r2": float((q_final**2).mean())}

    estimator_errors = None
    if "adequa" in cfg.policies:
        mu_errs, lam_errs = [], []
        for traj in trajectories:
            reports = traj.final.get("queues", [])
            mu_err = 0.0
            lam_err = 0.0
            for q, rep in enumerate(reports):
                if cfg.policies[q] != "adequa" or "mu_hat" not in rep:
                    continue
                mu_err = max(mu_err, float(np.abs(rep["mu_hat"] - cfg.params.mu).max()))
                lam_err = max(lam_err, float(np.abs(rep["lambda_hat"] - cfg.params.lam).max()))
            mu_errs.append(mu_err)
            lam_errs.append(lam_err)
        estimator_errors = {
            "mu_max_err_mean_over_seeds": float(np.mean(mu_errs)),
            "lambda_max_err_mean_over_seeds": float(np.mean(lam_errs)),
            "mu_max_err_worst_seed": float(np.max(mu_errs)),
            "lambda_max_err_worst_seed": float(np.max(lam_errs)),
        }

    return RunSummary(
        per_queue_time_avg_q=[float(x) for x in time_avg],
        per_queue_final_decile_q=[float(x) for x in final_dec],
        growth_rate=slope,
        moment_q_final=moments,
        estimator_errors=estimator_errors,
        seeds=list(cfg.seeds),
        policies=list(cfg.policies),
    )


@dataclass
class SuiteReport:
    """Outcome of one property suite: per-check status and the first
    violating input (verbatim) when a check fails."""

    name: str
    passed: bool
    checks: list[tuple[str, bool, str]] = field(default_factory=list)
    counterexample: str | None = None

    def add(self, label: str, ok: bool, detail: str = "") -> None:
        self.checks.append((label, ok, detail))
        if not ok:
            self.passed = False

    def render(self) -> str:
        lines = [f"suite {self.name}: {'PASS' if self.passed else 'FAIL'}"]
        for label, ok, detail in self.checks:
            lines.append(f"  [{'ok' if ok else 'FAIL'}] {label}" + (f" ({detail})" if detail else ""))
        if self.counterexample:
            lines.append(f"  counterexample: {self.counterexample}")
        return "\n".join(lines)


def random_bistochastic(rng: np.random.Generator, k: int) -> np.ndarray:
    """Convex combination of 2K random permutations: exactly bistochastic by
    construction, giving the suites an independent ground truth."""
    weights = rng.dirichlet(np.ones(2 * k))
    out = np.zeros((k, k))
    for w in weights:
        perm = rng.permutation(k)
        out[np.arange(k), perm] += w
    return out


def _birkhoff_suite(budget: int, rng: np.random.Generator) -> SuiteReport:
    rep = SuiteReport("birkhoff", True)
    worst_recon = 0.0
    worst_weight = 0.0
    for k in range(2, 7):
        for _ in range(budget):
            P = random_bistochastic(rng, k)
            C = draw_cost_matrix(rng, k)
            dec = ordered_birkhoff(P, C)
            recon = float(np.abs(dec.reconstruct() - P).max())
            worst_recon = max(worst_recon, recon)
            worst_weight = max(worst_weight, abs(float(dec.weights.sum()) - 1.0))
            costs = dec.costs(C)
            ok = (
                recon <= 1e-8
                and len(dec) <= k * k
                and dec.weights.min() > 0.0
                and abs(dec.weights.sum() - 1.0) <= 1e-9
                and np.all(np.diff(costs) > 0.0)
            )
            if not ok:
                rep.add(f"K={k}", False, f"reconstruction {recon:.2e}")
                rep.counterexample = f"P={P.tolist()}, C={C.tolist()}"
                return rep
    rep.add("reconstruction <= 1e-8", True, f"max {worst_recon:.2e}")
    rep.add("term count <= K^2 and weights sum to 1 +- 1e-9", True, f"sum off by {worst_weight:.2e}")
    rep.add("costs strictly increasing", True)
    return rep


def _phi_suite(budget: int, rng: np.random.Generator) -> SuiteReport:
    rep = SuiteReport("phi", True)
    params, _ = preset_instance("easy-fig3")
    margin = compute_margin(params)
    P = compute_phi(params.lam, params.mu)
    margins = verify_domination(P, params.lam, params.mu)
    ok = bool(margins.min() >= margin / SQRT_E - 1e-3)
    rep.add("easy-fig3 margins >= margin/sqrt(e) - 1e-3", ok, f"min margin {margins.min():.4f}")
    if not ok:
        rep.counterexample = f"P={P.tolist()}"
        return rep
    worst = math.inf
    for trial in range(budget):
        k = int(rng.integers(2, 7))
        lam = rng.uniform(0.05, 0.6, size=k)
        mu = np.clip(lam * rng.uniform(1.2, 2.5) + rng.uniform(0.0, 0.2, size=k), 0.0, 1.0)
        d_hat = empirical_margin(lam, mu)
        if d_hat <= 0.01:
            continue
        out = compute_phi(lam, mu)
        margins = verify_domination(out, lam, mu)
        slack = float(margins.min() - (d_hat / SQRT_E - 1e-3))
        worst = min(worst, slack)
        if slack < 0.0:
            rep.add("random instance margins", False, f"slack {slack:.2e}")
            rep.counterexample = f"lam={lam.tolist()}, mu={mu.tolist()}"
            return rep
    rep.add("random instances margins >= margin/sqrt(e) - 1e-3", True, f"min slack {worst:.2e}")
    return rep


def _sync_suite(budget: int, rng: np.random.Generator) -> SuiteReport:
    """Each queue draws its own tuple from an identically seeded stream; all
    tuples must agree round for round (and with the single-stream log)."""
    rep = SuiteReport("sync", True)
    params, _ = preset_instance("easy-fig3")
    schedule = ExplorationSchedule.for_system(params)
    horizon = max(50, budget)
    seed = int(rng.integers(2**31))
    bundle = adequa_bundle(params, schedule, PhiConfig(max_outer_iters=20, dykstra_iters=20), record_draws=True)
    run_episode(params, bundle, horizon, seed)
    reference = bundle.draw_log
    streams = [np.random.default_rng(np.random.SeedSequence(seed).spawn(5)[3]) for _ in range(params.n_queues)]
    for q in range(params.n_queues):
        draw_cost_matrix(streams[q], params.n_servers)
    for t in range(1, horizon + 1):
        tuples = [
            draw_shared(streams[q], t, schedule, params.n_queues, params.n_servers)
            for q in range(params.n_queues)
        ]
        if any(tup != tuples[0] for tup in tuples) or tuples[0] != reference[t - 1]:
            rep.add("identical shared draws", False, f"round {t}")
            rep.counterexample = f"t={t}, tuples={tuples}"
            return rep
    rep.add(f"identical shared draws over {horizon} rounds x {params.n_queues} queues", True)
    return rep


def _counterexample_suite(budget: int, rng: np.random.Generator) -> SuiteReport:
    rep = SuiteReport("counterexample", True)
    for n in (4, 6, 8, 10):
        cfg = baselines.CounterexampleConfig(n, 2, 0.8)
        bundle = baselines.CounterexampleBundle(cfg)
        horizon = min(400, max(100, budget))
        params = cfg.params()
        from .model import EnvState, EpisodeStreams

        streams = EpisodeStreams.from_seed(int(rng.integers(2**31)), n)
        bundle.setup(params, streams)
        state = EnvState.initial(params, streams.env)
        for q in range(n):
            state.buffers[q].append(1)  # keep everyone sending
        for t in range(1, horizon + 1):
            bundle._advance_window(t)
            stage1 = (t - bundle._window_start + 1) <= bundle._stage1_end
            decisions = bundle.decide_round(t, state)
            servers = [d.server for d in decisions]
            if stage1:
                pairs_ok = all(servers[2 * p] == servers[2 * p + 1] for p in range(n // 2))
                distinct = len({servers[2 * p] for p in range(n // 2)}) == n // 2
                if not (pairs_ok and distinct):
                    rep.add(f"N={n} stage-1 pairing", False, f"t={t} servers={servers}")
                    rep.counterexample = f"N={n}, t={t}"
                    return rep
            else:
                if len(set(servers)) != n:
                    rep.add(f"N={n} stage-2 distinctness", False, f"t={t} servers={servers}")
                    rep.counterexample = f"N={n}, t={t}"
                    return rep
        rep.add(f"N={n} stage-1 pairs collide, stage-2 all distinct", True)
    return rep


def property_suite(name: str, budget: int = 200, seed: int = 20210906) -> SuiteReport:
    """Run one randomized invariant suite at the given sampling budget."""
    rng = np.random.default_rng(seed)
    if name == "birkhoff":
        return _birkhoff_suite(budget, rng)
    if name == "phi":
        return _phi_suite(min(budget, 100), rng)
    if name == "sync":
        return _sync_suite(budget, rng)
    if name == "counterexample":
        return _counterexample_suite(budget, rng)
    raise ValueError(f"unknown suite {name!r}")
