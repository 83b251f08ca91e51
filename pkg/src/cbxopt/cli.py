"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numerical error.
Results go to standard output, diagnostics to standard error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from typing import List, Optional

import numpy as np

from .bench import CORPUS, BenchRunError, make_objective, run_benchmark
from .config import effective_config, parse_config
from .core import ConfigError, EvaluationError, NumericalError
from .dynamics import iterate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4


def _dumps(obj) -> str:
    return json.dumps(obj, allow_nan=False, separators=(",", ":"))


def _fail(code: int, message: str) -> int:
    print(f"cbxopt: error: {message}", file=sys.stderr)
    return code


def _load(path: str):
    try:
        return parse_config(path)
    except OSError as exc:
        raise _IOFailure(f"cannot read config {path!r}: {exc.strerror or exc}") from exc


class _IOFailure(Exception):
    pass


def cmd_run(args: argparse.Namespace) -> int:
    config, objective, output = _load(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    trace_path = args.trace or output.trace
    echo = effective_config(config, objective, replace(output, trace=trace_path))

    try:
        trace_file = open(trace_path, "w") if trace_path else None
    except OSError as exc:
        raise _IOFailure(f"cannot open trace file {trace_path!r}: {exc.strerror or exc}") from exc
    try:
        callback = None
        if trace_file is not None:
            def callback(record):
                trace_file.write(_dumps(record.to_dict()) + "\n")

        result, _ = iterate(config, objective.handle(), workers=args.workers, callback=callback)
    finally:
        if trace_file is not None:
            trace_file.close()

    out = result.to_dict()
    out["effective_config"] = echo
    print(_dumps(out))
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    config, objective, output = _load(args.config)
    if args.runs < 1:
        raise ConfigError(f"--runs must be a positive integer, got {args.runs}", key="runs")
    base_seed = config.seed if args.base_seed is None else args.base_seed
    if not (0 <= base_seed and base_seed + args.runs - 1 < 2**64):
        raise ConfigError("seeds must be 64-bit unsigned integers", key="base-seed")
    report_path = args.report or output.report
    echo = effective_config(config, objective, replace(output, report=report_path))

    report = run_benchmark(
        config, objective, args.runs, base_seed, args.tolerance, workers=args.workers, effective_config=echo
    )
    text = _dumps(report.to_dict())
    if report_path:
        try:
            with open(report_path, "w") as fh:
                fh.write(text + "\n")
        except OSError as exc:
            raise _IOFailure(f"cannot write report {report_path!r}: {exc.strerror or exc}") from exc
    else:
        print(text)
    evals = np.mean([r.eval_count for r in report.per_run])
    wall = np.mean([r.wall_ms for r in report.per_run])
    print(
        f"success_rate={report.success_rate:.4f} ({report.successes}/{report.runs}) "
        f"mean_evals={evals:.1f} mean_wall_ms={wall:.2f}"
    )
    return EXIT_OK


def cmd_list(args: argparse.Namespace) -> int:
    print("name       dimensions  known_minimizer  known_minimum")
    for name in sorted(CORPUS):
        obj = make_objective(name, 1)
        print(f"{name:<10} any d >= 1  origin           {obj.known_minimum_value:g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cbxopt", description="Consensus-based optimisation runs and benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one optimisation from a config file")
    p_run.add_argument("--config", required=True, help="path to the JSON config")
    p_run.add_argument("--seed", type=int, help="override the config seed")
    p_run.add_argument("--trace", help="write per-iteration records as JSON Lines to this path")
    p_run.add_argument("--workers", type=int, help="threads for objective evaluation")
    p_run.set_defaults(func=cmd_run)

    p_bench = sub.add_parser("bench", help="success-rate campaign over consecutive seeds")
    p_bench.add_argument("--config", required=True, help="path to the JSON config")
    p_bench.add_argument("--runs", type=int, required=True, help="number of seeded runs")
    p_bench.add_argument("--base-seed", type=int, help="first seed (default: config seed)")
    p_bench.add_argument("--tolerance", type=float, default=0.1, help="success distance to the known minimizer")
    p_bench.add_argument("--report", help="write the report JSON here instead of standard output")
    p_bench.add_argument("--workers", type=int, help="runs executed concurrently")
    p_bench.set_defaults(func=cmd_bench)

    p_list = sub.add_parser("list-objectives", help="list the built-in objectives")
    p_list.set_defaults(func=cmd_list)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, f"config: {exc}")
    except _IOFailure as exc:
        return _fail(EXIT_IO, str(exc))
    except BenchRunError as exc:
        cause = exc.__cause__
        if isinstance(cause, ConfigError):
            return _fail(EXIT_CONFIG, str(exc))
        return _fail(EXIT_NUMERICAL, str(exc))
    except (EvaluationError, NumericalError) as exc:
        return _fail(EXIT_NUMERICAL, f"numerical: {exc}")


if __name__ == "__main__":
    sys.exit(main())
