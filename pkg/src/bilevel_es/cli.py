"""Command-line entry point.

Subcommands: run, sweep, pretrain, plot. Exit codes: 0 ok, 1 config error,
2 runtime error, 3 IO error. Worker count for concurrent (mode, seed) runs
comes from the BILEVEL_ES_WORKERS environment variable.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import BilevelEsError, CheckpointError, ConfigError
from .harness import (
    ALL_MODES,
    SWEEP_AXES,
    RunConfig,
    load_config,
    pretrain_from_config,
    run_experiment,
    run_sweep,
)
from .plotting import plot_curves

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_IO = 3


def _add_common(parser):
    parser.add_argument("--config", help="TOML config file")
    parser.add_argument("--profile", choices=["quickstart", "paper_scale"])
    parser.add_argument("--seeds", help="comma-separated seed list")
    parser.add_argument("--iterations", type=int, dest="total_iterations")
    parser.add_argument("--output-dir")
    parser.add_argument("--task", help="task kind override")
    parser.add_argument("--modes", help="comma-separated mode list "
                        f"(subset of {','.join(ALL_MODES)})")
    parser.add_argument("--match-budget", action="store_true", default=None)
    parser.add_argument("--checkpoint-every", type=int, dest="checkpoint_every")
    parser.add_argument("--save-meta", dest="save_meta")
    parser.add_argument("--load-meta", dest="load_meta")


def _build_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    # CLI overrides beat file values, which beat defaults.
    if args.profile:
        cfg = RunConfig(**{**cfg.snapshot(), "profile": args.profile,
                           "n": None, "m": None, "lookahead_repeats": None,
                           "interval": None, "lstm_hidden": None,
                           "total_iterations": None, "beta": None})
    if args.seeds:
        try:
            cfg.seeds = [int(s) for s in args.seeds.split(",") if s]
        except ValueError:
            raise ConfigError(f"--seeds {args.seeds!r} is not a comma-separated "
                              "integer list") from None
    if args.total_iterations is not None:
        cfg.total_iterations = args.total_iterations
    if args.output_dir:
        cfg.output_dir = args.output_dir
    if args.task:
        cfg.task = {"kind": args.task}
        cfg.__post_init__()
    if args.modes:
        cfg.modes = [m for m in args.modes.split(",") if m]
        for mode in cfg.modes:
            if mode not in ALL_MODES:
                raise ConfigError(f"unknown mode {mode!r}")
    if args.match_budget is not None:
        cfg.match_budget = args.match_budget
    if args.checkpoint_every is not None:
        cfg.checkpoint_every = args.checkpoint_every
    if args.save_meta:
        cfg.save_meta = args.save_meta
    if args.load_meta:
        cfg.load_meta = args.load_meta
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bilevel-es",
        description="Bilevel ES experiments with online hyperparameter adaptation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run configured (mode, seed) experiments")
    _add_common(p_run)

    p_sweep = sub.add_parser("sweep", help="sweep one config axis")
    _add_common(p_sweep)
    p_sweep.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated numeric values")

    p_pre = sub.add_parser("pretrain", help="pretrain and save a meta model")
    _add_common(p_pre)
    p_pre.add_argument("--updates", type=int, default=None,
                       help="number of warm-start meta updates")
    p_pre.add_argument("--seed", type=int, default=0)

    p_plot = sub.add_parser("plot", help="plot learning curves to SVG")
    p_plot.add_argument("--out", required=True, help="output SVG path")
    p_plot.add_argument("--group", action="append", required=True,
                        help="label=csv1,csv2,... (repeatable)")
    return parser


def _cmd_run(args) -> int:
    cfg = _build_config(args)
    summary = run_experiment(cfg)
    print(json.dumps({"summary": summary["summary_path"]}, indent=2))
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _build_config(args)
    try:
        values = [float(v) if "." in v else int(v)
                  for v in args.values.split(",") if v]
    except ValueError:
        raise ConfigError(f"--values {args.values!r} must be numeric") from None
    result = run_sweep(cfg, args.axis, values)
    print(json.dumps({"axis": result["axis"], "values": result["values"]}))
    return EXIT_OK


def _cmd_pretrain(args) -> int:
    cfg = _build_config(args)
    if args.updates is not None:
        cfg.warm_start_updates = args.updates
    if not cfg.save_meta:
        raise ConfigError("pretrain requires --save-meta PATH")
    pretrain_from_config(cfg, seed=args.seed)
    print(json.dumps({"saved": cfg.save_meta}))
    return EXIT_OK


def _cmd_plot(args) -> int:
    groups = {}
    for spec in args.group:
        label, _, paths = spec.partition("=")
        if not paths:
            raise ConfigError(f"--group {spec!r} must be label=csv1,csv2,...")
        groups[label] = [p for p in paths.split(",") if p]
    out = plot_curves(groups, args.out)
    print(json.dumps({"svg": out}))
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "pretrain": _cmd_pretrain,
    "plot": _cmd_plot,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, CheckpointError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except BilevelEsError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
