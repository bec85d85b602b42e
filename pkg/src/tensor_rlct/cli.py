"""Command-line entry point: ``tensor-rlct {bound,table1,experiment}``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .experiment import (
    QUICK_COUNTS,
    QUICK_MCMC,
    TABLE1_CELLS,
    ExperimentConfig,
    format_table,
    load_config,
    run_experiment,
    write_reports,
)
from .mcmc import ConfigError
from .rlct_bounds import format_fraction, tensor_rlct_bound
from .tensor_core import ModelSpec

EXIT_OK, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI-style experiment config file")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--workers", type=int, help="worker processes")
    p.add_argument("--output", help="table output path (trial records go next to it)")
    p.add_argument("--format", choices=("csv", "json"), help="table file format")
    p.add_argument("--bounds-only", action="store_true", help="skip all MCMC work")
    p.add_argument("--quick", action="store_true",
                   help="small CI profile: 3 trials, 2000 test draws, 300 posterior draws")
    p.add_argument("--dump-chains", metavar="DIR", help="write per-trial chain traces")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tensor-rlct", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    b = sub.add_parser("bound", help="print the RLCT upper bound of one cell")
    for name in ("I", "J", "K", "H", "H0"):
        b.add_argument(name, type=int)

    t = sub.add_parser("table1", help="bounds and estimates for the 15 default cells")
    _add_run_flags(t)

    e = sub.add_parser("experiment", help="run the cells listed in a config file")
    e.add_argument("config_file", nargs="?", help="config file (same as --config)")
    _add_run_flags(e)
    return parser


def cmd_bound(args) -> int:
    try:
        spec = ModelSpec(args.I, args.J, args.K, args.H, args.H0)
        if spec.H0 < 1:
            raise ValueError("H0 must be ≥ 1")
        b = tensor_rlct_bound(spec)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    f = format_fraction
    print(f"cell: I={spec.I} J={spec.J} K={spec.K} H={spec.H} H0={spec.H0}")
    print(f"core_term: {f(b.core_term)}")
    print(f"m1: {f(b.m1)}")
    print(f"m2: {f(b.m2)}")
    print(f"m3: {f(b.m3)}")
    print(f"argmin: {','.join(b.argmin)}")
    print(f"bound: {f(b.bound)}")
    print(f"half_params: {f(b.half_params)}")
    print(f"obvious_lambda1: {f(b.obvious_lambda1)}")
    return EXIT_OK


def resolve_config(args, default_cells) -> ExperimentConfig:
    """Defaults, then ``--quick``, then the config file, then explicit flags."""
    cfg = ExperimentConfig(cells=list(default_cells))
    if args.quick:
        cfg = replace(cfg, mcmc=QUICK_MCMC, **QUICK_COUNTS)
    path = getattr(args, "config_file", None) or args.config
    if path:
        cfg = load_config(path, cfg)
    if args.seed is not None:
        cfg.master_seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    if args.output is not None:
        cfg.output_path = args.output
    if args.format is not None:
        cfg.format = args.format
    if args.bounds_only:
        cfg.bounds_only = True
    if args.dump_chains is not None:
        cfg.dump_chains = args.dump_chains
    cfg.validate()
    return cfg


def _progress(done, total):
    print(f"\r  trials {done}/{total}", end="" if done < total else "\n",
          file=sys.stderr, flush=True)


def cmd_run(args, default_cells) -> int:
    try:
        cfg = resolve_config(args, default_cells)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    reports = run_experiment(cfg, progress=None if cfg.bounds_only else _progress)
    print(format_table(reports))
    if cfg.output_path:
        for p in write_reports(reports, cfg.output_path, cfg.format):
            print(f"wrote {p}", file=sys.stderr)
    for r in reports:
        if r.message and r.status == "ok":
            print(f"warning: cell {r.spec.key()}: {r.message}", file=sys.stderr)
    if any(r.status in ("diverged", "failed") for r in reports):
        return EXIT_DIVERGED
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "bound":
        return cmd_bound(args)
    if args.command == "table1":
        return cmd_run(args, TABLE1_CELLS)
    if not (args.config_file or args.config):
        print("error: experiment needs a config file", file=sys.stderr)
        return EXIT_USAGE
    return cmd_run(args, [])


if __name__ == "__main__":
    sys.exit(main())
