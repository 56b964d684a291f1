"""Command-line entry point.

Subcommands: ``simulate`` runs a batch experiment from a JSON config,
``check`` runs one of the built-in property suites, ``deviate`` runs the
paired deviation experiment on a counterexample instance.  Exit codes:
0 success, 1 suite or assertion failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import baselines, harness


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="decqueue")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a batch experiment from a JSON config")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", default=None, help="output directory (default: alongside config)")
    sim.add_argument("--seed-offset", type=int, default=0, help="offset added to every seed")

    chk = sub.add_parser("check", help="run a built-in property suite")
    chk.add_argument("--suite", required=True, choices=["birkhoff", "phi", "sync", "counterexample"])
    chk.add_argument("--budget", type=int, default=200)

    dev = sub.add_parser("deviate", help="paired deviation experiment on a counterexample instance")
    dev.add_argument("--config", required=True)
    dev.add_argument("--queue", type=int, required=True)
    dev.add_argument("--dist", required=True, help="comma-separated server distribution")
    dev.add_argument("--out", default=None)
    dev.add_argument("--seed-offset", type=int, default=0)
    return parser


def _cmd_simulate(args) -> int:
    out_dir = Path(args.out) if args.out else Path(args.config).parent / "out"
    cfg = harness.load_config(args.config, out_dir=out_dir)
    if args.seed_offset:
        cfg.seeds = [s + args.seed_offset for s in cfg.seeds]
    summary = harness.run_experiment(cfg)
    print(json.dumps(summary.to_json(), indent=2))
    return 0


def _cmd_check(args) -> int:
    report = harness.property_suite(args.suite, budget=args.budget)
    print(report.render())
    return 0 if report.passed else 1


def _cmd_deviate(args) -> int:
    cfg = harness.load_config(args.config)
    if cfg.counterexample is None:
        raise harness.MalformedConfig(
            "deviate requires the counterexample(...) preset", "instance.preset"
        )
    try:
        dist = [float(x) for x in args.dist.split(",")]
    except ValueError as exc:
        raise harness.MalformedConfig(f"bad distribution: {exc}", "--dist") from exc
    if len(dist) != cfg.params.n_servers:
        raise harness.LengthMismatch(
            f"distribution has {len(dist)} entries for {cfg.params.n_servers} servers", "--dist"
        )
    if not 0 <= args.queue < cfg.params.n_queues:
        raise harness.MalformedConfig(f"queue {args.queue} out of range", "--queue")
    seeds = [s + args.seed_offset for s in cfg.seeds]
    report = baselines.deviation_experiment(
        cfg.counterexample, args.queue, dist, cfg.horizon, seeds
    )
    payload = {
        "windows": report.windows,
        "seeds": report.seeds,
        "mean_diff_per_window": report.difference.mean(axis=0).tolist(),
        "summary_last_10_windows": report.summary(last_windows=10),
    }
    print(json.dumps(payload, indent=2))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        payload["compliant"] = report.compliant.tolist()
        payload["deviant"] = report.deviant.tolist()
        (out / "deviation.json").write_text(json.dumps(payload, indent=2) + "\n")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "check":
            return _cmd_check(args)
        if args.command == "deviate":
            return _cmd_deviate(args)
    except harness.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (baselines.NonPositiveMargin, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
