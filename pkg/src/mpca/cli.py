"""Command line interface.

Subcommands:

* ``simulate``: run a Monte-Carlo campaign (a named preset or a JSON
  config) and write report.json, histogram.csv, coverage.csv and figures;
* ``analyze``: fit and debias components of a long-format CSV tensor with
  optional preprocessing, writing loadings.csv, report.json and figures;
* ``oracle-check``: run the small-instance validation battery.

The ``MPCA_SEED`` environment variable overrides the base seed. Exit
codes: 0 success, 1 configuration error, 2 numerical failure, 3 oracle
check failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .analyze import run_analysis, write_analysis
from .checks import oracle_check
from .debias import InferenceUnavailableError
from .model import sample
from .simulate import PRESETS, RunConfig, preset_config, run_simulation, write_outputs
from .tensors import read_long_csv

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_ORACLE = 3


class _ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad usage; remap to the config exit code
    def error(self, message):
        raise _ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="mpca", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a Monte-Carlo campaign")
    src = sim.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=sorted(PRESETS), help="named configuration")
    src.add_argument("--config", type=Path, help="JSON run configuration")
    sim.add_argument("--reps", type=int, help="override replicate count")
    sim.add_argument("--seed", type=int, help="override base seed")
    sim.add_argument("--regime", choices=["auto", "A", "B", "C"], help="override regime")
    sim.add_argument("--alpha", type=float, help="override test level")
    sim.add_argument("--out", type=Path, default=Path("mpca-out"), help="output directory")
    sim.add_argument("--jobs", type=int, default=1, help="parallel replicate workers")
    sim.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    sim.add_argument(
        "--export-sample",
        type=Path,
        help="also write replicate 0's raw sample as long CSV",
    )

    ana = sub.add_parser("analyze", help="analyze a long-format CSV tensor")
    ana.add_argument("--input", type=Path, required=True, help="long CSV (obs index first)")
    ana.add_argument("--dims", required=True, help="comma-separated shape incl. obs count")
    ana.add_argument("--r", type=int, required=True, help="number of components")
    ana.add_argument("--regime", default="auto", choices=["auto", "A", "B", "C"])
    ana.add_argument("--alpha", type=float, default=0.05)
    ana.add_argument("--seed", type=int, default=0)
    ana.add_argument("--log", action="store_true", help="log-transform positive cells")
    ana.add_argument("--mad", action="store_true", help="standardize series to MAD 1")
    ana.add_argument(
        "--mad-axes",
        help="comma-separated 1-based axes indexing a series (default: last axis)",
    )
    ana.add_argument("--center", action="store_true", help="subtract the mean observation")
    ana.add_argument(
        "--drop-missing",
        type=float,
        default=None,
        metavar="FRAC",
        help="drop units with more than FRAC missing cells (e.g. 0.05)",
    )
    ana.add_argument("--out", type=Path, default=Path("mpca-out"), help="output directory")
    ana.add_argument("--no-figures", action="store_true")

    sub.add_parser("oracle-check", help="run the validation battery")
    return parser


def _env_seed() -> int | None:
    raw = os.environ.get("MPCA_SEED")
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError as exc:
        raise _ConfigError(f"MPCA_SEED must be an integer, got {raw!r}") from exc


def _simulate(args) -> int:
    overrides = {}
    if args.reps is not None:
        overrides["replicates"] = args.reps
    if args.regime is not None:
        overrides["regime"] = args.regime
    if args.alpha is not None:
        overrides["alpha"] = args.alpha
    seed = _env_seed()
    if args.seed is not None:
        seed = args.seed
    if seed is not None:
        overrides["seed"] = seed
    try:
        if args.preset:
            cfg = preset_config(args.preset, **overrides)
        else:
            raw = json.loads(args.config.read_text())
            raw.update(overrides)
            cfg = RunConfig.from_dict(raw)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        raise _ConfigError(str(exc)) from exc

    if args.export_sample is not None:
        from .simulate import _build_truth

        data = sample(_build_truth(cfg), cfg.n, cfg.noise, seed=cfg.seed)
        data.to_long_csv(args.export_sample)
        print(f"wrote {args.export_sample}")

    report = run_simulation(cfg, jobs=args.jobs)
    written = write_outputs(report, args.out, figures=not args.no_figures)
    agg = report["aggregates"]
    print(f"regime {report['regime']}, {cfg.replicates} replicates, "
          f"{agg['n_failed']} failed")
    for tid, row in sorted(agg["coverage"].items()):
        print(
            f"  {tid}: coverage {row['coverage_rate']:.3f}, "
            f"rejection {row['rejection_rate']:.3f} (true {row['true']:.4f})"
        )
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def _analyze(args) -> int:
    try:
        dims = tuple(int(x) for x in args.dims.split(","))
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise ValueError("--dims needs the observation count plus mode sizes")
        if not 1 <= args.r <= min(dims[1:]):
            raise ValueError(
                f"--r must lie in [1, {min(dims[1:])}] for mode sizes {dims[1:]}"
            )
        series_axes = None
        if args.mad_axes:
            series_axes = tuple(int(x) - 1 for x in args.mad_axes.split(","))
        seed = _env_seed()
        if seed is None:
            seed = args.seed
    except ValueError as exc:
        raise _ConfigError(str(exc)) from exc
    try:
        stacked = read_long_csv(args.input, dims, missing=float("nan"))
    except (OSError, ValueError) as exc:
        raise _ConfigError(f"cannot read {args.input}: {exc}") from exc
    result = run_analysis(
        stacked,
        args.r,
        regime=args.regime,
        alpha=args.alpha,
        seed=seed,
        drop_missing_threshold=args.drop_missing,
        log_transform=args.log,
        mad_standardize=args.mad,
        series_axes=series_axes,
        center=args.center,
    )
    written = write_analysis(result, args.out, figures=not args.no_figures)
    print(f"regime {result.regime}, n={result.n}, dims={result.dims}")
    for k, share in enumerate(result.shares):
        print(f"  component {k + 1}: value {result.values[k]:.4f}, share {share:.3f}")
    for note in result.notes:
        print(f"  note: {note}")
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def _oracle_check() -> int:
    ok, rows = oracle_check()
    width = max(len(name) for name, _, _ in rows)
    for name, passed, detail in rows:
        print(f"{name:<{width}}  {'PASS' if passed else 'FAIL'}  {detail}")
    return EXIT_OK if ok else EXIT_ORACLE


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "simulate":
            return _simulate(args)
        if args.command == "analyze":
            return _analyze(args)
        return _oracle_check()
    except _ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InferenceUnavailableError, RuntimeError, ValueError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
