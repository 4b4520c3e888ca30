"""Command-line entry point: ``memfront sweep|front|twoscale|kernel-check``."""

import argparse
import json
import logging
import sys

from . import config, experiments
from .errors import ConfigError, KernelError, MemfrontError, NotBistable

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3

log = logging.getLogger("memfront")

VERBS = {
    "sweep": ("speed_sweep", "speed sweep over the coupling beta"),
    "front": ("single_run", "single front: fixed point and/or time-domain run"),
    "twoscale": ("two_scale_demo", "two-scale homogenization example"),
    "kernel-check": ("kernel_check", "validate a kernel block and print its moments"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="memfront",
                                     description="Traveling fronts with temporal memory.")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb, (_, help_text) in VERBS.items():
        p = sub.add_parser(verb, help=help_text)
        p.add_argument("--config", help="JSON experiment file")
        p.add_argument("--out", help="output directory (overrides output.dir)")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="edit a config entry, e.g. sweep.beta_step=0.01")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    kind, _ = VERBS[args.verb]
    try:
        cfg = config.load(args.config, args.override, experiment=kind)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.verb == "sweep" and cfg["experiment"] not in ("speed_sweep", "fixed_point_sweep"):
        print("config error: 'sweep' needs a speed_sweep or fixed_point_sweep config",
              file=sys.stderr)
        return EXIT_CONFIG
    outdir = args.out or cfg["output"]["dir"]
    try:
        if args.verb == "sweep":
            rows, summary = experiments.run_speed_sweep(cfg, outdir)
            print(json.dumps(summary, indent=2))
            if summary["failed_fraction"] > cfg["failure_budget"]:
                print(f"{summary['n_failed']} of {summary['n_rows']} rows failed",
                      file=sys.stderr)
                return EXIT_SOLVER
        elif args.verb == "front":
            print(json.dumps(experiments.run_front(cfg, outdir), indent=2))
        elif args.verb == "twoscale":
            print(json.dumps(experiments.run_two_scale_demo(cfg, outdir), indent=2))
        else:
            print(json.dumps(experiments.kernel_check(cfg, outdir), indent=2))
    except (ConfigError, KernelError, NotBistable, ValueError, KeyError) as exc:
        print(f"config error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MemfrontError as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
