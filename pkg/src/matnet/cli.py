"""Command-line entry point.

Subcommands:
  experiment  run one of the named experiments (xor, sine, mnist)
  train       run an experiment described by a JSON config file
  gradcheck   compare the closed-form gradient against finite differences

Exit codes: 0 success, 1 configuration error, 2 runtime or training error.
"""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .data import IdxFormatError
from .harness import (
    ConfigError,
    default_config,
    derived_seeds,
    gradcheck,
    gradcheck_random,
    load_config,
    run_experiment,
)
from .linalg import ShapeError
from .train import RsmConfig, TrainingError


def _add_run_options(p):
    p.add_argument("--seed", type=int, default=None, help="experiment seed")
    p.add_argument("--out", default=None, help="output directory for CSV/metadata")
    p.add_argument(
        "--methods",
        default=None,
        help="comma separated subset of gd,fs,rsm (default: all three)",
    )
    p.add_argument(
        "--concurrent",
        action="store_true",
        help="run the selected methods in parallel threads",
    )
    p.add_argument("--mnist-images", default=None, help="IDX training images")
    p.add_argument("--mnist-labels", default=None, help="IDX training labels")
    p.add_argument("--mnist-val-images", default=None, help="IDX validation images")
    p.add_argument("--mnist-val-labels", default=None, help="IDX validation labels")


def _apply_run_options(cfg, args):
    if args.out is not None:
        cfg.out_dir = args.out
    if args.concurrent:
        cfg.concurrent = True
    for attr in ("mnist_images", "mnist_labels", "mnist_val_images",
                 "mnist_val_labels"):
        value = getattr(args, attr)
        if value is not None:
            setattr(cfg, attr, value)
    return cfg


def _print_report(report):
    for key, trace in report.traces.items():
        rec = trace.records[-1]
        print(
            f"{key}: {rec.epoch} epochs, final cost {rec.cost:.6e}, "
            f"status {trace.status}"
        )
    if report.class_counts is not None:
        for key, counts in report.class_counts.items():
            total_ok = sum(c for c, _ in counts)
            total = sum(t for _, t in counts)
            per_class = " ".join(f"{c}/{t}" for c, t in counts)
            print(f"{key}: validation {total_ok}/{total} correct ({per_class})")
    if report.config.out_dir:
        print(f"wrote outputs to {report.config.out_dir}")


def cmd_experiment(args) -> int:
    methods = args.methods.split(",") if args.methods else None
    cfg = default_config(args.name, seed=args.seed, methods=methods)
    _apply_run_options(cfg, args)
    report = run_experiment(cfg)
    _print_report(report)
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.rsm = RsmConfig(
            cfg.rsm.ensemble_size,
            cfg.rsm.radius,
            cfg.rsm.epochs,
            cfg.rsm.elitism,
            derived_seeds(args.seed)["rsm"],
        )
    if args.methods:
        cfg.methods = tuple(args.methods.split(","))
    _apply_run_options(cfg, args)
    report = run_experiment(cfg)
    _print_report(report)
    return 0


def cmd_gradcheck(args) -> int:
    if args.experiment == "random":
        report = gradcheck_random(args.seed, args.trials)
    else:
        cfg = default_config(args.experiment)
        report = gradcheck(cfg.spec, args.seed, args.trials)
    for t in report.trials:
        note = f" (resamples {t.resamples})" if t.resamples else ""
        print(f"trial {t.trial}: max rel error {t.max_rel_error:.3e}{note}")
    verdict = "PASS" if report.passed else "FAIL"
    print(
        f"{verdict}: worst {report.max_rel_error:.3e} vs threshold "
        f"{report.threshold:.0e} over {len(report.trials)} trials"
    )
    return 0 if report.passed else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="matnet",
        description="Train small feedforward networks three ways and compare.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("experiment", help="run a named experiment")
    p.add_argument("name", choices=["xor", "sine", "mnist"])
    _add_run_options(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("train", help="run an experiment from a JSON config")
    p.add_argument("config", help="path to config JSON (or a metadata.json)")
    _add_run_options(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("gradcheck", help="verify the analytic gradient")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--experiment",
        choices=["random", "xor", "sine", "mnist"],
        default="random",
        help="architecture source (random draws a fresh one per trial)",
    )
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (TrainingError, IdxFormatError, ShapeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
