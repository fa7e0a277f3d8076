"""Command-line entry point: ``run``, ``compare``, ``gen-table`` and ``metrics``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import harness
from .actuation import ActuationMode, DomainError, TableFormatError, build_table, save_table

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SIMULATION = 3


def _apply_overrides(cfg, args):
    changes = {}
    if getattr(args, "strategy", None):
        changes["strategy"] = args.strategy
    if getattr(args, "maneuver", None):
        changes["maneuver"] = args.maneuver
    if getattr(args, "seed", None) is not None:
        changes["rng_seed"] = args.seed
    if not changes:
        return cfg
    # re-run validation (strategy decides the camera rate)
    return harness.ScenarioConfig(**{**_fields(cfg), **changes})


def _fields(cfg):
    return {name: getattr(cfg, name) for name in cfg.__dataclass_fields__}


def cmd_run(args):
    cfg = _apply_overrides(harness.load_config(args.config), args)
    log, summary = harness.run_scenario(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    harness.export_log(log, out / "trajectory.csv")
    (out / "summary.json").write_text(json.dumps(summary.to_dict(), indent=2), encoding="utf-8")
    settle = "did not settle" if summary.settling_time is None else f"{summary.settling_time:.3f} s"
    print(f"{cfg.strategy.value} on {cfg.maneuver.value}: settling {settle}; wrote {out}")
    return EXIT_OK


def cmd_compare(args):
    cfg = _apply_overrides(harness.load_config(args.config), args)
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    if not strategies:
        raise harness.ConfigError("strategies: empty list")
    strategies = [harness._parse_enum(harness.Strategy, s, "strategies") for s in strategies]
    report = harness.compare_strategies(cfg, strategies)
    print(harness.format_report(report))
    if args.json:
        Path(args.json).write_text(json.dumps(report, indent=2), encoding="utf-8")
    return EXIT_OK


def cmd_gen_table(args):
    if not args.step_deg > 0 or abs(90.0 / args.step_deg - round(90.0 / args.step_deg)) > 1e-9:
        raise harness.ConfigError("step-deg: must divide 90 degrees evenly")
    mode = ActuationMode.parse(args.mode)
    table = build_table(mode, np.deg2rad(args.step_deg))
    save_table(table, args.out)
    print(f"wrote {table.angles.size}-node {mode.value} table to {args.out}")
    return EXIT_OK


def cmd_metrics(args):
    try:
        log = harness.load_log(args.log)
    except (OSError, ValueError) as exc:
        raise harness.ConfigError(f"log: {exc}") from None
    ref = np.deg2rad(args.theta_ref)
    band = np.deg2rad(args.band)
    result = {
        "settling_time": harness.settling_time(log, ref, band, args.engage_time),
        "peak_overshoot": harness.peak_overshoot(log, ref, args.engage_time),
        "band_occupancy": harness.band_occupancy(log, ref, band, args.engage_time),
    }
    print(json.dumps(result, indent=2))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="magpitch", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one scenario")
    p.add_argument("--config", required=True)
    p.add_argument("--strategy")
    p.add_argument("--maneuver")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="compare strategies on one maneuver")
    p.add_argument("--config", required=True)
    p.add_argument("--strategies", required=True, help="comma-separated, e.g. OnOff,MpcCam30")
    p.add_argument("--maneuver")
    p.add_argument("--seed", type=int)
    p.add_argument("--json", help="also write the report as JSON to this path")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gen-table", help="generate an actuation table from the field model")
    p.add_argument("--mode", required=True, help="diagonal or vertical")
    p.add_argument("--step-deg", type=float, default=5.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_table)

    p = sub.add_parser("metrics", help="recompute settling metrics from a trajectory CSV")
    p.add_argument("--log", required=True)
    p.add_argument("--theta-ref", type=float, default=30.0, help="degrees")
    p.add_argument("--band", type=float, default=2.5, help="degrees")
    p.add_argument("--engage-time", type=float, default=harness.ENGAGE_TIME)
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (harness.SimulationError, DomainError, FloatingPointError) as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    except (harness.ConfigError, TableFormatError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
