"""Command-line interface: ``smartbayes {bench,simulate,fit,predict,ratio,plot}``.

Exit status is 0 on success, 1 on usage errors and 2 on data errors. All
diagnostics go to stderr; results are written to files only.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys

import numpy as np

from . import bench, classify, core, ratio, simulate, spline

logger = logging.getLogger("smartbayes")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or any(v < 1 for v in values):
        raise argparse.ArgumentTypeError("sizes must be positive integers")
    return tuple(sorted(set(values)))


def _classifier_list(text: str) -> tuple[str, ...]:
    names = tuple(v.strip() for v in text.split(",") if v.strip())
    bad = [n for n in names if n not in bench.CLASSIFIER_LABELS]
    if not names or bad:
        raise argparse.ArgumentTypeError(f"classifiers must be drawn from nb,lr,sb (got {text!r})")
    return names


def _label_map(text: str) -> tuple[str, str]:
    neg, sep, pos = text.partition(":")
    if not sep or not neg or not pos:
        raise argparse.ArgumentTypeError("label map must look like NEG:POS")
    return neg, pos


def _grid(text: str) -> np.ndarray:
    try:
        lo, hi, steps = text.split(":")
        lo, hi, steps = float(lo), float(hi), int(steps)
    except ValueError:
        raise argparse.ArgumentTypeError("grid must look like MIN:MAX:STEPS") from None
    if steps < 2 or not hi > lo:
        raise argparse.ArgumentTypeError("grid needs MAX > MIN and STEPS >= 2")
    return np.linspace(lo, hi, steps)


def _preprocess(text: str) -> core.PreprocessRule:
    try:
        return core.PreprocessRule.parse(text)
    except core.DataError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="smartbayes", description="Smart Bayes, Naive Bayes and logistic regression classifiers.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("bench", help="learning curve on a CSV dataset")
    p.add_argument("--data", required=True, metavar="PATH")
    p.add_argument("--label-col", required=True, metavar="NAME")
    p.add_argument("--label-map", type=_label_map, metavar="NEG:POS")
    p.add_argument("--preprocess", type=_preprocess, default=core.PreprocessRule(core.RuleKind.NONE),
                   metavar="RULE", help="none | drop-noncontinuous | quartile-filter:COL | median-binarize:COL")
    p.add_argument("--sizes", type=_int_list, metavar="CSV-LIST",
                   help="training sizes (default: geometric ladder up to 70%% of n)")
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--classifiers", type=_classifier_list, default=("nb", "lr", "sb"))
    p.add_argument("--out", required=True, metavar="PATH")
    p.add_argument("--svg", metavar="PATH")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("simulate", help="learning curve on simulated Gaussian or t data")
    p.add_argument("--dist", choices=("gaussian", "t"), required=True)
    p.add_argument("--df", type=float)
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--params-from", metavar="PATH")
    p.add_argument("--label-col", metavar="NAME")
    p.add_argument("--sizes", type=_int_list, required=True, metavar="CSV-LIST")
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--classifiers", type=_classifier_list, default=("nb", "lr", "sb"))
    p.add_argument("--out", required=True, metavar="PATH")
    p.add_argument("--svg", metavar="PATH")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("fit", help="fit one classifier and save it as JSON")
    p.add_argument("--data", required=True, metavar="PATH")
    p.add_argument("--label-col", required=True, metavar="NAME")
    p.add_argument("--label-map", type=_label_map, metavar="NEG:POS")
    p.add_argument("--model", choices=("nb", "lr", "sb"), required=True)
    p.add_argument("--out", required=True, metavar="PATH")

    p = sub.add_parser("predict", help="score a CSV with a saved model")
    p.add_argument("--model", required=True, metavar="PATH")
    p.add_argument("--data", required=True, metavar="PATH")
    p.add_argument("--out", required=True, metavar="PATH")

    p = sub.add_parser("ratio", help="tabulate one feature's estimated log density ratio")
    p.add_argument("--data", required=True, metavar="PATH")
    p.add_argument("--label-col", required=True, metavar="NAME")
    p.add_argument("--label-map", type=_label_map, metavar="NEG:POS")
    p.add_argument("--feature", required=True, metavar="NAME")
    p.add_argument("--grid", type=_grid, required=True, metavar="MIN:MAX:STEPS",
                   help="evenly spaced grid; write --grid=-2:2:9 when MIN is negative")
    p.add_argument("--out", required=True, metavar="PATH")

    p = sub.add_parser("plot", help="render a learning-curve CSV as SVG")
    p.add_argument("--in", dest="input", required=True, metavar="PATH")
    p.add_argument("--out", required=True, metavar="PATH")
    return parser


def _num(v: float) -> str:
    return f"{v:.17g}"


def _cmd_bench(args) -> None:
    if args.reps < 1 or args.workers < 1:
        raise UsageError("--reps and --workers must be >= 1")
    cfg = bench.BenchConfig(
        training_sizes=args.sizes or (), replications=args.reps, master_seed=args.seed,
        classifiers=args.classifiers, path=args.data, label_column=args.label_col,
        label_map=args.label_map, rule=args.preprocess,
    )
    curve = bench.run_benchmark(cfg, workers=args.workers)
    bench.emit_curve_csv(curve, args.out)
    if args.svg:
        bench.emit_svg_plot(curve, args.svg, title=cfg.dataset_name)


def _cmd_simulate(args) -> None:
    if args.reps < 1 or args.workers < 1 or args.p < 1:
        raise UsageError("--p, --reps and --workers must be >= 1")
    if args.dist == "t" and args.df is None:
        raise UsageError("--dist t requires --df")
    if args.dist == "gaussian" and args.df is not None:
        raise UsageError("--df only applies to --dist t")
    if args.params_from:
        if not args.label_col:
            raise UsageError("--params-from requires --label-col")
        ds = core.load_csv(args.params_from, args.label_col)
        ds = core.preprocess(ds, core.PreprocessRule(core.RuleKind.DROP_NONCONTINUOUS))
        if ds.p < args.p:
            raise core.DataError(f"{args.params_from} has only {ds.p} continuous columns")
        c0, c1 = simulate.ionosphere_like_params(ds.select_columns(range(args.p)))
    else:
        c0, c1 = simulate.wishart_like_params(args.p, args.seed)
    df = args.df if args.dist == "t" else None
    name = f"t{args.df:g}" if df else "gaussian"
    plan = simulate.SimulationPlan(
        c0.with_df(df), c1.with_df(df), args.sizes, args.reps, args.seed,
        classifiers=args.classifiers, name=name,
    )
    curve = simulate.run_simulation(plan, workers=args.workers)
    bench.emit_curve_csv(curve, args.out)
    if args.svg:
        bench.emit_svg_plot(curve, args.svg, title=name)


def _cmd_fit(args) -> None:
    ds = core.load_csv(args.data, args.label_col, args.label_map)
    model = classify.fit_classifier(args.model, ds)
    classify.save_model(model, args.out, columns=ds.column_names)


def _cmd_predict(args) -> None:
    model, columns = classify.read_model_file(args.model)
    header, rows = core._read_rows(args.data)
    if columns is None:
        raise core.DataError("model file lists no columns")
    missing = [c for c in columns if c not in header]
    if missing:
        raise core.DataError(f"data lacks model columns: {', '.join(missing)}")
    idx = [header.index(c) for c in columns]
    keep, values = [], []
    for i, row in enumerate(rows):
        parsed = [core._parse_float(row[j]) for j in idx]
        if any(v is None for v in parsed):
            continue
        keep.append(i)
        values.append(parsed)
    if len(keep) < len(rows):
        logger.warning("skipped %d rows with missing values", len(rows) - len(keep))
    X = np.array(values, dtype=float).reshape(len(keep), len(columns))
    result = model.predict(X) if keep else core.PredictionResult(np.empty(0))
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "score", "predicted"])
        for i, s, c in zip(keep, result.scores, result.predicted):
            w.writerow([i, _num(s), int(c)])


def _cmd_ratio(args) -> None:
    ds = core.load_csv(args.data, args.label_col, args.label_map)
    x = ds.column(args.feature)
    z_spline = ratio.fit_marginal_ratio(x, ds.labels)(args.grid)
    z_gauss = ratio.fit_marginal_ratio(x, ds.labels, kind=ratio.RatioKind.GAUSSIAN)(args.grid)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "z_spline", "z_gaussian"])
        for row in zip(args.grid, z_spline, z_gauss):
            w.writerow([_num(v) for v in row])


def _cmd_plot(args) -> None:
    curve = bench.parse_curve_csv(args.input)
    if not curve.rows:
        raise core.DataError("curve file has no rows")
    bench.emit_svg_plot(curve, args.out)


_COMMANDS = {
    "bench": _cmd_bench, "simulate": _cmd_simulate, "fit": _cmd_fit,
    "predict": _cmd_predict, "ratio": _cmd_ratio, "plot": _cmd_plot,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr,
    )
    try:
        _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"smartbayes {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (core.DataError, classify.ModelError, spline.SplineError, simulate.CholeskyError,
            OSError, ValueError) as exc:
        print(f"smartbayes {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
