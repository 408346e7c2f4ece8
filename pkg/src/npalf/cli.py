"""Command-line entry points: train, bench, inspect.

Exit codes: 0 on success, 2 on configuration or input errors, 3 when a
run diverged.
"""

from __future__ import annotations

import argparse
import sys

from .data import DataError
from .optimizers import OPTIMIZER_TAGS
from .trainer import (
    ConfigError,
    RunConfig,
    bench,
    build_config,
    cross_validate,
    emit_csv,
    load_dataset,
    read_config_file,
    train,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


def _add_run_flags(p: argparse.ArgumentParser, with_optimizer: bool) -> None:
    p.add_argument("--config", help="key = value config file; explicit flags override it")
    p.add_argument("--data", help="rating file path")
    p.add_argument("--format", dest="fmt", choices=("tsv", "colons", "csv"))
    if with_optimizer:
        p.add_argument("--optimizer", choices=OPTIMIZER_TAGS)
    p.add_argument("--rank", type=int, help="latent dimension (default 20)")
    p.add_argument("--eta", type=float, help="learning rate (default 0.04)")
    p.add_argument("--lambda", dest="lam", type=float, help="regularization (default 0.05)")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-epochs", dest="max_epochs", type=int)
    p.add_argument("--tol", type=float, help="convergence threshold on |delta valid RMSE| (default 1e-5)")
    p.add_argument("--split", help="train:valid:test weights, e.g. 7:1:2")
    p.add_argument("--folds", type=int, help="rotation cross-validation fold count (0 = single split)")
    p.add_argument("--repeats", type=int)
    p.add_argument("--swarm-size", dest="swarm_size", type=int)
    p.add_argument("--fitness", dest="fitness_kind", choices=("rmse", "mae"))
    p.add_argument("--timing", choices=("wall", "off"), help="'off' zeroes the seconds columns for reproducible files")
    p.add_argument("--out", help="output directory for curve.csv / summary.csv")


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    file_values = read_config_file(args.config) if args.config else None
    keys = (
        "data", "fmt", "optimizer", "rank", "eta", "lam", "seed", "max_epochs",
        "tol", "split", "folds", "repeats", "swarm_size", "fitness_kind",
        "timing", "out",
    )
    overrides = {k: getattr(args, k) for k in keys if hasattr(args, k)}
    return build_config(file_values, **overrides)


def _print_summary(s) -> None:
    print(
        f"optimizer={s.optimizer} epochs={s.n_epochs} termination={s.termination} "
        f"best_epoch={s.best_epoch} lowest_valid_rmse={s.lowest_valid_rmse:.6f} "
        f"test_rmse={s.test_rmse:.6f} total_seconds={s.total_seconds:.3f}"
    )


def cmd_train(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    if config.folds:
        result = cross_validate(config)
        for s in result.summaries:
            _print_summary(s)
        print(
            f"cv: folds={len(result.summaries)} failed={result.n_failed} "
            f"test_rmse={result.mean_test_rmse:.4f}±{result.std_test_rmse:.4f} "
            f"seconds={result.mean_seconds:.1f}±{result.std_seconds:.1f}"
        )
        return EXIT_DIVERGED if result.n_failed else EXIT_OK

    summary, records = train(config)
    if config.out is not None:
        emit_csv(records, summary, config.out)
    _print_summary(summary)
    return EXIT_DIVERGED if summary.termination == "diverged" else EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    summaries = bench(config)
    for s in summaries:
        _print_summary(s)
    return EXIT_DIVERGED if any(s.termination == "diverged" for s in summaries) else EXIT_OK


def cmd_inspect(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    ds = load_dataset(config)
    print(f"users    {ds.n_users}")
    print(f"items    {ds.n_items}")
    print(f"entries  {ds.n_entries}")
    print(f"density  {ds.density:.10g} ({100 * ds.density:.4g}%)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="npalf", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train one optimizer (or cross-validate with --folds)")
    _add_run_flags(p_train, with_optimizer=True)
    p_train.set_defaults(func=cmd_train)

    p_bench = sub.add_parser("bench", help="run the full optimizer comparison matrix")
    _add_run_flags(p_bench, with_optimizer=False)
    p_bench.set_defaults(func=cmd_bench)

    p_inspect = sub.add_parser("inspect", help="print dataset statistics")
    p_inspect.add_argument("--config")
    p_inspect.add_argument("--data")
    p_inspect.add_argument("--format", dest="fmt", choices=("tsv", "colons", "csv"))
    p_inspect.set_defaults(func=cmd_inspect)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
