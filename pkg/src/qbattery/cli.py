"""Command-line entry point.

Subcommands dispatch the storage experiments (decay-curve, fit-rates,
local-energy, spacing-sweep) and the fast selftest.  Exit codes: 0 on
success, 2 for configuration errors, 3 when integrator health (trace
drift or negativity) breaches its thresholds.
"""

import argparse
import sys

from .experiments import RUNNERS
from .runconfig import ConfigError, effective_workers, load_config, resolve_params
from .selftest import run_selftest
from .version import __version__

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_HEALTH = 3

_EXPERIMENTS = ("decay-curve", "fit-rates", "local-energy", "spacing-sweep")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qbattery",
        description="Storage dynamics of a mirror-terminated waveguide "
                    "quantum battery: collective decay, ergotropy, disorder averages.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name.replace('-', ' ')} experiment")
        p.add_argument("--config", help="INI config file (a manifest also works)")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--workers", type=int,
                       help="worker-pool width (default: all cores; "
                            "QBATTERY_WORKERS overrides)")
        p.add_argument("--out-dir", help="output directory override")
        p.add_argument("--n-avg", type=int, help="disorder realizations override")
        p.add_argument("--tol", type=float,
                       help="sets both abs_tol and rel_tol")
    sub.add_parser("selftest", help="run the fast invariant suite (< 60 s)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "selftest":
        return EXIT_OK if run_selftest() else 1

    experiment = args.command.replace("-", "_")
    overrides = {
        "seed": args.seed,
        "workers": args.workers,
        "out_dir": args.out_dir,
        "n_avg": args.n_avg,
    }
    if args.tol is not None:
        overrides["abs_tol"] = args.tol
        overrides["rel_tol"] = args.tol
    try:
        raw = load_config(args.config)
        params = resolve_params(raw, experiment, overrides)
    except ConfigError as exc:
        print(f"qbattery: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    workers = effective_workers(params)
    try:
        paths, health = RUNNERS[experiment](params, params["out_dir"], workers)
    except ConfigError as exc:
        print(f"qbattery: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for path in paths:
        print(f"wrote {path}")
    if not health.ok(params["rel_tol"]):
        print(f"qbattery: numerical health failure: "
              f"max trace drift {health.max_trace_drift:.3e}, "
              f"min eigenvalue {health.min_eigenvalue:.3e}", file=sys.stderr)
        return EXIT_HEALTH
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
