"""Command-line entry point: ``grantfree simulate ...``."""

from __future__ import annotations

import argparse
import sys

from .config import SystemConfig, load_config_file
from .errors import ConfigError
from .harness import ExperimentSpec, parse_sweep, run_experiment
from .receivers import SCHEMES


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="grantfree", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sim = sub.add_parser("simulate", help="Monte Carlo comparison of receivers")
    sim.add_argument("--config", help="TOML file of SystemConfig fields")
    sim.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="override one config field (repeatable)")
    sim.add_argument("--sweep", help="e.g. K=10:10:100 or theta=0.1,0.5,0.9")
    sim.add_argument("--schemes", default=",".join(SCHEMES), help="comma-separated scheme names")
    sim.add_argument("--blocks", type=int, default=100)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--out", default="results.csv")
    sim.add_argument("--workers", type=int, default=1)
    sim.add_argument("--no-timing", action="store_true",
                     help="skip wall-clock columns (makes the CSV reproducible byte for byte)")
    sim.add_argument("--plot", metavar="PNG", help="also render the metrics to this image")
    return parser


def resolve_config(config_path, overrides) -> SystemConfig:
    values = {}
    if config_path:
        values.update(load_config_file(config_path))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        values[key.strip()] = value.strip()
    return SystemConfig.from_mapping(values)


def simulate(args) -> int:
    cfg = resolve_config(args.config, args.set)
    seed = cfg.rng_seed if args.seed is None else args.seed
    var, values = parse_sweep(args.sweep) if args.sweep else (None, ())
    schemes = tuple(s.strip() for s in args.schemes.split(",") if s.strip())
    spec = ExperimentSpec(cfg, var, values, schemes, args.blocks, seed, args.out,
                          timing=not args.no_timing, workers=args.workers)
    result = run_experiment(spec)
    sys.stdout.write(result.csv_text())
    if args.plot:
        from .plotting import plot_results

        plot_results(result.rows, args.plot, var or "single point")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return simulate(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
