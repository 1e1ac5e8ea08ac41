"""Command-line interface.

Examples:
  chartensor train --input data.csv --rank 4 --harmonics 5 --output model.lrcf
  chartensor crossval --input data.csv --grid "F=2,4,8;K=3,5,7" --output model.lrcf
  chartensor eval --model model.lrcf --input test.csv
  chartensor sample --model model.lrcf --count 1500 --seed 1 --output samples.csv
  chartensor regress --model model.lrcf --input test.csv --targets y1,y2

Exit status: 0 success, 2 usage, 3 data problems, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import warnings

import numpy as np

from . import modelfile
from .crossval import CvPlan, cross_validate, parse_grid
from .density import impute, log_likelihood
from .ecf import DEFAULT_PAD, Dataset, read_csv, write_csv
from .errors import ChartensorError, DataError, ModelFormatError, NumericalError
from .factorization import FitOptions, fit
from .sampler import sample

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


class UsageError(Exception):
    pass


def _threads(args) -> int:
    if args.threads:
        return args.threads
    return int(os.environ.get("CHARTENSOR_THREADS", "1"))


def _bounds(text):
    if text is None:
        return None
    lo, _, hi = text.partition(":")
    return (float(lo), float(hi))


def _fit_options(args, rank, harmonics) -> FitOptions:
    return FitOptions(
        rank=rank,
        harmonics=harmonics,
        triple_budget=args.triples,
        seed=args.seed,
        restarts=args.restarts,
        max_outer_iters=args.max_iters,
        pad=args.pad,
        bounds=_bounds(args.bounds),
        min_count=args.min_count,
        workers=_threads(args),
    )


def _print_warnings(caught, stream) -> None:
    for w in caught:
        print(f"warning: {w.message}", file=stream)


def cmd_train(args) -> int:
    data = read_csv(args.input, args.delimiter)
    if data.n_vars < 3:
        raise DataError(f"training needs at least 3 columns, found {data.n_vars}")
    opts = _fit_options(args, args.rank, args.harmonics)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        model, report = fit(data, opts)
    modelfile.save_model(model, args.output)
    print(report.summary())
    _print_warnings(caught, sys.stdout)
    print(f"model written to {args.output}")
    return 0


def cmd_crossval(args) -> int:
    data = read_csv(args.input, args.delimiter)
    try:
        plan = CvPlan(parse_grid(args.grid), args.validation_fraction, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    base = _fit_options(args, plan.grid[0][0], plan.grid[0][1])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = cross_validate(data, plan, base)
    print(result.table())
    print(result.report.summary())
    _print_warnings(caught, sys.stdout)
    modelfile.save_model(result.model, args.output)
    print(f"model written to {args.output}")
    return 0


def cmd_eval(args) -> int:
    model = modelfile.load_model(args.model)
    data = read_csv(args.input, args.delimiter)
    if data.n_vars != model.N:
        raise DataError(f"input has {data.n_vars} columns, model expects {model.N}")
    report = log_likelihood(model, data, space="raw")
    print(report.summary())
    return 0


def cmd_sample(args) -> int:
    model = modelfile.load_model(args.model)
    if args.count < 1:
        raise UsageError("--count must be positive")
    out = sample(model, args.count, seed=args.seed, workers=_threads(args), method=args.method)
    write_csv(args.output, out, args.delimiter)
    return 0


def _resolve_targets(data: Dataset, spec: str) -> list[int]:
    targets = []
    for item in (s.strip() for s in spec.split(",")):
        if not item:
            continue
        if data.names is not None and item in data.names:
            targets.append(data.names.index(item))
        elif data.names is None and item.isdigit() and int(item) < data.n_vars:
            targets.append(int(item))
        else:
            raise UsageError(f"unknown target column {item!r}")
    if not targets:
        raise UsageError("no target columns given")
    return targets


def cmd_regress(args) -> int:
    model = modelfile.load_model(args.model)
    data = read_csv(args.input, args.delimiter)
    if data.n_vars != model.N:
        raise DataError(f"input has {data.n_vars} columns, model expects {model.N}")
    targets = _resolve_targets(data, args.targets)
    X = np.where(data.mask, data.values, np.nan)
    pred = impute(model, X, targets, space="raw")
    names = [data.names[t] if data.names else f"x{t}" for t in targets]
    out = Dataset(pred, np.isfinite(pred), [f"pred_{n}" for n in names])
    if args.output:
        write_csv(args.output, out, args.delimiter)
    else:
        print(",".join(out.names))
        for row in pred:
            print(",".join(repr(float(v)) for v in row))
    for col, (t, name) in enumerate(zip(targets, names)):
        truth = data.mask[:, t]
        if truth.any():
            mae = float(np.mean(np.abs(pred[truth, col] - data.values[truth, t])))
            print(f"MAE {name}: {mae:.10g}", file=sys.stderr if not args.output else sys.stdout)
    return 0


def _add_common(p, fit_args: bool = False) -> None:
    p.add_argument("--delimiter", default=",", help="CSV field delimiter")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: $CHARTENSOR_THREADS or 1)")
    if fit_args:
        p.add_argument("--triples", type=int, default=None, help="maximum number of variable triples")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--restarts", type=int, default=3)
        p.add_argument("--max-iters", type=int, default=200)
        p.add_argument("--min-count", type=int, default=30,
                       help="joint observations required per triple")
        p.add_argument("--pad", type=float, default=DEFAULT_PAD,
                       help="fraction of [0,1] left free at each end after scaling")
        p.add_argument("--bounds", default=None, metavar="LO:HI",
                       help="known support shared by all columns instead of data min/max")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chartensor",
        description="Low-rank characteristic-tensor density estimation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model with fixed rank and cutoff")
    p.add_argument("--input", required=True)
    p.add_argument("--rank", type=int, required=True, help="rank F")
    p.add_argument("--harmonics", type=int, required=True, help="harmonic cutoff K")
    p.add_argument("--output", required=True)
    _add_common(p, fit_args=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("crossval", help="choose (F, K) on a validation split, then refit")
    p.add_argument("--input", required=True)
    p.add_argument("--grid", required=True, help='e.g. "F=2,4,8;K=3,5,7"')
    p.add_argument("--output", required=True)
    p.add_argument("--validation-fraction", type=float, default=0.2)
    _add_common(p, fit_args=True)
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("eval", help="average log-likelihood of a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sample", help="draw synthetic rows")
    p.add_argument("--model", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.add_argument("--method", choices=("exact", "latent"), default="exact",
                   help="exact: target the joint density; latent: clamp each class separately")
    _add_common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("regress", help="conditional-mean prediction of target columns")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--targets", required=True, help="comma-separated column names")
    p.add_argument("--output", default=None)
    _add_common(p)
    p.set_defaults(func=cmd_regress)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ModelFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ChartensorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
