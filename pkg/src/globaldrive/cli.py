"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 unrealizable target,
4 numerical non-convergence.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .config import DEFAULT_CONFIG_TEXT, ConfigError, ExperimentConfig, load_config, parse_config
from .experiments import FIGURES, UnrealizableTarget, run_compile, run_figure, run_modes
from .ion_crystal import EquilibriumError

log = logging.getLogger("globaldrive")

EXIT_OK, EXIT_CONFIG, EXIT_UNREALIZABLE, EXIT_NUMERICAL = 0, 2, 3, 4


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config file (INI sections)")
    common.add_argument("--seed", type=int, help="override run.seed")
    common.add_argument("--out", help="override run.output_dir")
    common.add_argument("--workers", type=int, help="threads for shot sampling")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="globaldrive",
        description="Compile and simulate Ising models driven by a global trapped-ion drive.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("modes", parents=[common], help="axial modes and Lamb-Dicke parameters")
    sub.add_parser("compile", parents=[common], help="compile the target into phases and tones")
    fig = sub.add_parser("figure", parents=[common], help="run a figure-level experiment")
    fig.add_argument("name", help=f"one of: {', '.join(FIGURES)}")
    sub.add_parser("default-config", help="print the default configuration")
    return parser


def _resolve(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else parse_config(DEFAULT_CONFIG_TEXT)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.workers is not None:
        overrides["workers"] = args.workers
    if overrides:
        cfg = ExperimentConfig(**{**cfg.__dict__, **overrides})
    return cfg


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command == "default-config":
        sys.stdout.write(DEFAULT_CONFIG_TEXT)
        return EXIT_OK
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = _resolve(args)
        if args.command == "modes":
            files = run_modes(cfg)
        elif args.command == "compile":
            files = run_compile(cfg)
        else:
            if args.name not in FIGURES:
                raise ConfigError(f"unknown figure {args.name!r}; choose from {', '.join(FIGURES)}")
            files = run_figure(cfg, args.name)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except UnrealizableTarget as exc:
        print(f"unrealizable target: {exc}", file=sys.stderr)
        return EXIT_UNREALIZABLE
    except EquilibriumError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for f in files:
        print(f)
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
