"""Command-line front end: train, sweep, ep-tool, report.

Exit codes: 0 success, 1 usage or bad config, 2 data error, 3 trial
divergence.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .config import expand_grid, load_config_file
from .errors import ConfigError, DataFormatError, ParameterError
from .report import report
from .sweep import run_sweep
from .transforms import ep_from_sigma, sigma_from_ep
from .trial import append_result, run_trial

__all__ = ["main"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3

CONFIRM_THRESHOLD = 64


def _float_list(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="analognn",
        description="Train networks through simulated analog transform chains.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run one trial from a config file")
    p.add_argument("--config", required=True, help="key = value config file")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--data-dir", default="data", help="dataset root (default: data)")
    p.add_argument("--out", default="results.csv", help="results CSV to append to")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="run a config grid as independent trials")
    p.add_argument("--config", required=True, help="config file with list-valued fields")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default: 1)")
    p.add_argument("--data-dir", default="data", help="dataset root (default: data)")
    p.add_argument("--out", default="results.csv", help="results CSV to append to")
    p.add_argument("--base-seed", type=int, default=0,
                   help="seed offset for grid points without an explicit seed")
    p.add_argument("--yes", action="store_true",
                   help=f"skip confirmation for grids over {CONFIRM_THRESHOLD} trials")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ep-tool", help="error probability <-> noise level conversions")
    ep_sub = p.add_subparsers(dest="subcommand", required=True)
    q = ep_sub.add_parser("sigma", help="noise level for a target error probability")
    q.add_argument("--ep", type=float, required=True)
    q.add_argument("--bits", type=int, required=True)
    q.set_defaults(func=cmd_ep_sigma)
    q = ep_sub.add_parser("ep", help="error probability at a noise level")
    q.add_argument("--sigma", type=float, required=True)
    q.add_argument("--bits", type=int, required=True)
    q.set_defaults(func=cmd_ep_ep)
    q = ep_sub.add_parser("table", help="sigma table over bits x error probability")
    q.add_argument("--bits", type=_int_list, default=[2, 4, 6, 8],
                   help="comma list (default: 2,4,6,8)")
    q.add_argument("--ep", type=_float_list, default=[0.05, 0.25, 0.5, 0.75],
                   help="comma list (default: 0.05,0.25,0.5,0.75)")
    q.set_defaults(func=cmd_ep_table)

    p = sub.add_parser("report", help="summarize a results CSV")
    p.add_argument("csv", help="results CSV path")
    p.add_argument("--group-by", action="append", default=[], metavar="FIELD",
                   help="config column to group by (repeatable)")
    p.add_argument("--plot-data", default=None, metavar="DIR",
                   help="directory for plain-text plot data files")
    p.set_defaults(func=cmd_report)
    return parser


def cmd_train(args) -> int:
    configs = expand_grid(load_config_file(args.config))
    if len(configs) != 1:
        raise ConfigError(f"{args.config} defines a grid of {len(configs)} trials; "
                          f"use the sweep command")
    cfg = configs[0]
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    out = Path(args.out)
    log_path = out.parent / "logs" / f"{cfg.config_hash}.log"
    result = run_trial(cfg, args.data_dir, log_path=log_path, echo=print)
    append_result(out, result)
    print(f"appended {result.config_hash} to {out}")
    if result.failed:
        print(f"trial diverged: {result.error}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_sweep(args) -> int:
    configs = expand_grid(load_config_file(args.config), base_seed=args.base_seed)
    print(f"grid: {len(configs)} trials")
    if len(configs) > CONFIRM_THRESHOLD and not args.yes:
        if sys.stdin.isatty():
            answer = input(f"run {len(configs)} trials? [y/N] ")
            if answer.strip().lower() not in ("y", "yes"):
                print("aborted")
                return EXIT_USAGE
        else:
            print(f"refusing to start {len(configs)} trials without --yes",
                  file=sys.stderr)
            return EXIT_USAGE
    summary = run_sweep(configs, args.data_dir, args.out, jobs=args.jobs, echo=print)
    print(f"sweep done: {summary.executed} run, {summary.skipped} skipped, "
          f"{summary.failed} failed (results in {args.out})")
    return EXIT_OK


def cmd_ep_sigma(args) -> int:
    if not 0.0 <= args.ep < 1.0:
        raise ConfigError(f"--ep must lie in [0,1), got {args.ep}")
    sigma = 0.0 if args.ep == 0 else sigma_from_ep(args.ep, args.bits)
    print(f"{sigma:.6f}")
    return EXIT_OK


def cmd_ep_ep(args) -> int:
    if args.sigma < 0:
        raise ConfigError(f"--sigma must be nonnegative, got {args.sigma}")
    print(f"{ep_from_sigma(args.sigma, args.bits):.6f}")
    return EXIT_OK


def cmd_ep_table(args) -> int:
    eps = args.ep
    if any(not 0.0 < e < 1.0 for e in eps):
        raise ConfigError("table --ep values must lie in (0,1)")
    header = "bits" + "".join(f"{e:>12.3f}" for e in eps)
    print(header)
    for b in args.bits:
        row = f"{b:<4d}" + "".join(f"{sigma_from_ep(e, b):>12.6f}" for e in eps)
        print(row)
    return EXIT_OK


def cmd_report(args) -> int:
    plot_dir = args.plot_data if args.plot_data else None
    print(report(args.csv, group_by=args.group_by, plot_dir=plot_dir))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse uses exit code 2 for usage problems; remap (0 stays help)
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except (ConfigError, ParameterError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, DataFormatError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
