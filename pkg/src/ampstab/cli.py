"""Command-line entry point: ``ampstab <subcommand> [flags]``.

A JSON config file (``--config``) supplies defaults; explicit flags win.
Exit status is 0 when the experiment completes (failed trials included),
2 for configuration errors and 3 for numerical-engine errors.
"""
import argparse
import json
import logging
import sys

from .denoiser import NumericalError
from .experiments import ExperimentConfig, run

SUBCOMMANDS = {
    "eigen-profile": "eigen_profile",
    "threshold-curve": "threshold_curve",
    "success-sweep": "success_sweep",
    "schedule-compare": "schedule_compare",
    "single": "single_run",
}


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text):
    return [int(x) for x in text.split(",") if x.strip()]


def build_parser():
    parser = argparse.ArgumentParser(prog="ampstab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        # every default is None so that the config file can fill the gap
        p.add_argument("-v", "--verbose", action="store_true")
        p.add_argument("--config", help="JSON file with default settings")
        p.add_argument("--rho", type=float)
        p.add_argument("--alpha", type=float)
        p.add_argument("--delta", type=float)
        p.add_argument("--gamma", type=float)
        p.add_argument("--gamma-grid", type=_floats, dest="gamma_grid")
        p.add_argument("--rho-grid", type=_floats, dest="rho_grid")
        p.add_argument("--n", type=int)
        p.add_argument("--n-list", type=_ints, dest="n_list")
        p.add_argument("--trials", type=int)
        p.add_argument("--seed", type=int, dest="base_seed")
        p.add_argument("--damping", type=float)
        p.add_argument("--schedule", choices=["amp", "amp_damped", "rbp_parallel", "rbp_sequential"])
        p.add_argument("--max-iter", type=int, dest="max_iter")
        p.add_argument("--tol", type=float)
        p.add_argument("--success-mse", type=float, dest="success_mse")
        p.add_argument("--mean-remove", action="store_const", const=True, dest="mean_remove")
        p.add_argument("--se-overlay", action="store_const", const=True, dest="se_overlay")
        p.add_argument("--out-dir", dest="out_dir")
        p.add_argument("--workers", type=int)
    return parser


def config_from_args(args):
    settings = {}
    if args.config:
        with open(args.config) as fh:
            settings.update(json.load(fh))
    for key, val in vars(args).items():
        if key in ("command", "config", "verbose") or val is None:
            continue
        settings[key] = val
    settings["experiment"] = SUBCOMMANDS[args.command]
    return ExperimentConfig(**settings)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
    except (TypeError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"ampstab: configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        run(cfg)
    except (NumericalError, FloatingPointError) as exc:
        print(f"ampstab: numerical error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
