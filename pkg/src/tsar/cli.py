"""Command-line front end: ``tsar fit | predict | evaluate | kernel-dump``."""

import argparse
import csv
import json
import logging
import sys

import numpy as np

from .frame import FrameFormatError, format_value, parse_timestamp, read_csv, write_csv
from .model import HYPER_NAMES, TsarForecaster
from .persistence import ModelFormatError, load_file, save_file
from .residual import DEFAULT_ALPHA, DEFAULT_GRID_SIZE, NotPositiveDefiniteError, assemble_kernel

__all__ = ["main", "build_parser"]


class CliError(Exception):
    def __init__(self, kind, message):
        super().__init__(message)
        self.kind = kind


def _parse_fix(items, columns):
    """``column.hyper=value`` items to a per-column dict."""
    fixed = {}
    for item in items or ():
        lhs, sep, value = item.partition("=")
        column, dot, hyper = lhs.rpartition(".")
        if not sep or not dot or not column:
            raise CliError("usage", f"--fix expects <column>.<hyper>=<value>, got {item!r}")
        hyper = hyper[2:] if hyper.startswith("k_") else hyper
        if hyper not in HYPER_NAMES:
            raise CliError("usage", f"--fix: unknown hyper-parameter {hyper!r} (choose from {', '.join(HYPER_NAMES)})")
        if column not in columns:
            raise CliError("usage", f"--fix: unknown column {column!r}")
        try:
            fixed.setdefault(column, {})[hyper] = int(value)
        except ValueError:
            raise CliError("usage", f"--fix: {item!r} needs an integer value") from None
    return fixed


class _Parser(argparse.ArgumentParser):
    """Reports usage errors on one line, like every other failure."""

    def error(self, message):
        print(f"error: usage: {' '.join(message.split())}", file=sys.stderr)
        sys.exit(1)


def _time_arg(text):
    try:
        return parse_timestamp(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser():
    parser = _Parser(prog="tsar", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log search progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit a model on a CSV and write the model file")
    fit.add_argument("data", help="input CSV: ISO-8601 UTC time column, then value columns")
    fit.add_argument("--model", required=True, help="output model file")
    fit.add_argument("--past", type=int, required=True)
    fit.add_argument("--future", type=int, required=True)
    fit.add_argument("--ratio", type=float, default=2 / 3)
    fit.add_argument("--width", type=int, default=1)
    fit.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    fit.add_argument("--lambda-grid", type=int, default=DEFAULT_GRID_SIZE, dest="lambda_grid",
                     help="number of regularization values searched")
    fit.add_argument("--preset", choices=["hourly", "daily"], default="hourly")
    fit.add_argument("--periods", type=float, nargs=3, metavar=("DAY", "WEEK", "YEAR"),
                     help="season lengths in grid steps; overrides --preset")
    for name in HYPER_NAMES:
        fit.add_argument(f"--k-{name}", type=int, dest=f"k_{name}", help=f"fix {name} harmonics for every column")
    fit.add_argument("--fix", action="append", metavar="COLUMN.HYPER=VALUE",
                     help="fix one column's harmonic count (trend, day, week, year); repeatable")
    fit.add_argument("--rank", type=int, help="fix the number of principal directions")
    fit.add_argument("--lambda", type=float, dest="lam", help="fix the kernel regularization")

    predict = sub.add_parser("predict", help="fill a window around --time")
    predict.add_argument("data", help="CSV with recent observations (may be header-only)")
    predict.add_argument("--model", required=True)
    predict.add_argument("--time", required=True, type=_time_arg, help="prediction time, ISO-8601 UTC")
    predict.add_argument("--output", "-o", help="output CSV (default: stdout)")

    evaluate = sub.add_parser("evaluate", help="report baseline and residual losses on a CSV")
    evaluate.add_argument("data")
    evaluate.add_argument("--model", required=True)

    dump = sub.add_parser("kernel-dump", help="write the dense residual kernel as CSV")
    dump.add_argument("--model", required=True)
    dump.add_argument("--output", "-o", help="output CSV (default: stdout)")
    dump.add_argument("--full", action="store_true",
                      help="dump the full block-Toeplitz kernel instead of the low-rank plus block-diagonal one")
    return parser


def _read(path, step=None):
    try:
        return read_csv(path, step=step)
    except FrameFormatError as exc:
        raise CliError("csv", f"{path}: {exc}") from None
    except OSError as exc:
        raise CliError("io", str(exc)) from None


def _load(path):
    try:
        return load_file(path)
    except ModelFormatError as exc:
        raise CliError("model", f"{path}: {exc}") from None
    except OSError as exc:
        raise CliError("io", str(exc)) from None


def _open_out(path):
    return open(path, "w", newline="") if path else sys.stdout


def cmd_fit(args):
    frame = _read(args.data)
    model = TsarForecaster(
        past=args.past,
        future=args.future,
        ratio=args.ratio,
        width=args.width,
        alpha=args.alpha,
        n_lambdas=args.lambda_grid,
        preset=args.preset,
        periods=tuple(args.periods) if args.periods else None,
        k_trend=args.k_trend,
        k_day=args.k_day,
        k_week=args.k_week,
        k_year=args.k_year,
        fixed=_parse_fix(args.fix, frame.columns) or None,
        rank=args.rank,
        lam=args.lam,
    )
    model.fit(frame)
    try:
        save_file(model, args.model)
    except OSError as exc:
        raise CliError("io", str(exc)) from None
    summary = {
        "model": args.model,
        "columns": {
            c: {
                "harmonics": counts.as_dict(),
                "test_loss": model.test_losses_.get("baseline", {}).get(c),
            }
            for c, counts in zip(model.columns_, model.counts_)
        },
        "rank": model.rank_,
        "lambda": model.lambda_,
        "gp_test_loss": model.test_losses_.get("gp"),
        "search": {
            c: {"names": list(r.names), "values": r.values, "evaluations": len(r.evaluations)}
            for c, r in model.baseline_reports_.items()
        },
    }
    print(json.dumps(summary, indent=2, default=float))


def cmd_predict(args):
    model = _load(args.model)
    frame = _read(args.data, step=model.grid_.step)
    out = model.predict(frame, args.time)
    fh = _open_out(args.output)
    try:
        write_csv(out, fh)
    finally:
        if fh is not sys.stdout:
            fh.close()


def cmd_evaluate(args):
    model = _load(args.model)
    frame = _read(args.data, step=model.grid_.step)
    print(json.dumps(model.evaluate(frame), indent=2))


def cmd_kernel_dump(args):
    model = _load(args.model)
    if not hasattr(model, "kernel_"):
        raise CliError("model", "model has no kernel")
    matrix = assemble_kernel(model.correlations_) if args.full else model.kernel_.dense()
    L = model.past + model.future
    labels = [f"{c}:{s}" for c in model.columns_ for s in range(L)]
    fh = _open_out(args.output)
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(labels)
        for row in np.asarray(matrix):
            writer.writerow([format_value(v) for v in row])
    finally:
        if fh is not sys.stdout:
            fh.close()


COMMANDS = {
    "fit": cmd_fit,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "kernel-dump": cmd_kernel_dump,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except CliError as exc:
        kind, msg = exc.kind, str(exc)
    except NotPositiveDefiniteError as exc:
        kind, msg = "kernel", str(exc)
    except (ValueError, RuntimeError) as exc:
        kind, msg = "input", str(exc)
    else:
        return 0
    print(f"error: {kind}: {' '.join(msg.split())}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
