"""Learning-curve harness: repeated random train/test splits at several
training sizes, with CSV and SVG output."""

from __future__ import annotations

import csv
import io
import logging
import math
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .classify import NoInformativeFeatures, PriorOnlyModel, SmartBayesModel, fit_classifier
from .core import (
    DataError,
    Dataset,
    DegenerateSplitError,
    PreprocessRule,
    RuleKind,
    SplitSpec,
    load_csv,
    load_table,
    misclassification_rate,
    preprocess,
    split,
)
from .ratio import estimate_prior_odds
from .spline import FitOptions

logger = logging.getLogger(__name__)

CLASSIFIER_LABELS = {"nb": "NB", "lr": "LR", "sb": "SB"}
CSV_HEADER = ("dataset", "classifier", "train_size", "mean_error", "sd_error", "replications", "redraws")
MAX_REDRAWS = 1000


def derive_seed(master_seed: int, *keys: int) -> int:
    """64-bit seed for one cell of an experiment.

    Mixes the master seed with the integer keys (training size, replication,
    redraw attempt) through numpy's SeedSequence hash, so a cell's stream
    does not depend on which other cells exist.
    """
    ss = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, *map(int, keys)])
    return int(ss.generate_state(1, np.uint64)[0])


# --------------------------------------------------------------------------
# curves


@dataclass(frozen=True)
class CurveRow:
    dataset: str
    classifier: str
    train_size: int
    mean_error: float
    sd_error: float
    replications: int
    redraws: int = 0
    flagged: int = 0  # degraded fits (separation, prior-only fallback); not written to CSV

    def __post_init__(self):
        if not 0.0 <= self.mean_error <= 1.0:
            raise ValueError("mean_error outside [0, 1]")
        if self.sd_error < 0 or self.replications < 1:
            raise ValueError("invalid sd_error or replications")


@dataclass
class LearningCurve:
    rows: list[CurveRow] = field(default_factory=list)

    def sorted_rows(self) -> list[CurveRow]:
        return sorted(self.rows, key=lambda r: (r.classifier, r.train_size, r.dataset))

    def cell(self, classifier: str, train_size: int) -> CurveRow:
        label = CLASSIFIER_LABELS.get(classifier, classifier)
        for r in self.rows:
            if r.classifier == label and r.train_size == train_size:
                return r
        raise KeyError((classifier, train_size))

    def __len__(self):
        return len(self.rows)


def curve_to_csv(curve: LearningCurve) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in curve.sorted_rows():
        w.writerow([
            r.dataset, r.classifier, r.train_size, f"{r.mean_error:.6f}", f"{r.sd_error:.6f}",
            r.replications, r.redraws,
        ])
    return buf.getvalue()


def emit_curve_csv(curve: LearningCurve, path) -> None:
    Path(path).write_text(curve_to_csv(curve), encoding="utf-8")


def parse_curve_csv(path) -> LearningCurve:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise DataError(f"{path}: not a learning-curve CSV")
        rows = [
            CurveRow(
                r["dataset"], r["classifier"], int(r["train_size"]), float(r["mean_error"]),
                float(r["sd_error"]), int(r["replications"]), int(r["redraws"]),
            )
            for r in reader
        ]
    return LearningCurve(rows)


# --------------------------------------------------------------------------
# SVG

_COLOURS = {"LR": "#1f77b4", "NB": "#2ca02c", "SB": "#d62728"}
_W, _H = 640, 420
_LEFT, _RIGHT, _TOP, _BOTTOM = 70, 130, 30, 60


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def emit_svg_plot(curve: LearningCurve, path, title: str | None = None) -> None:
    """Mean error against training size, one polyline per classifier."""
    Path(path).write_text(curve_to_svg(curve, title), encoding="utf-8")


def curve_to_svg(curve: LearningCurve, title: str | None = None) -> str:
    if not curve.rows:
        raise ValueError("cannot plot an empty curve")
    rows = curve.sorted_rows()
    sizes = sorted({r.train_size for r in rows})
    x_lo, x_hi = sizes[0], sizes[-1]
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 1, x_hi + 1
    y_hi = math.ceil(max(r.mean_error for r in rows) / 0.05 - 1e-9) * 0.05
    y_hi = max(y_hi, 0.05)
    pw, ph = _W - _LEFT - _RIGHT, _H - _TOP - _BOTTOM

    def sx(v):
        return _LEFT + (v - x_lo) / (x_hi - x_lo) * pw

    def sy(v):
        return _TOP + ph - v / y_hi * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
        f'<line x1="{_LEFT}" y1="{_TOP + ph}" x2="{_LEFT + pw}" y2="{_TOP + ph}" stroke="black"/>',
        f'<line x1="{_LEFT}" y1="{_TOP}" x2="{_LEFT}" y2="{_TOP + ph}" stroke="black" data-ymax="{y_hi:.2f}"/>',
    ]
    n_ticks = int(round(y_hi / 0.05))
    step = max(1, math.ceil(n_ticks / 10))
    for i in range(0, n_ticks + 1, step):
        v = i * 0.05
        out.append(
            f'<text x="{_LEFT - 6}" y="{_fmt(sy(v) + 4)}" font-size="11" text-anchor="end">{v:.2f}</text>'
        )
    for s in sizes:
        out.append(
            f'<text x="{_fmt(sx(s))}" y="{_TOP + ph + 16}" font-size="11" text-anchor="middle">{s}</text>'
        )
    out.append(
        f'<text x="{_LEFT + pw / 2:.2f}" y="{_H - 15}" font-size="13" text-anchor="middle">training size</text>'
    )
    out.append(
        f'<text x="18" y="{_TOP + ph / 2:.2f}" font-size="13" text-anchor="middle" '
        f'transform="rotate(-90 18 {_TOP + ph / 2:.2f})">mean misclassification rate</text>'
    )
    if title:
        out.append(f'<text x="{_LEFT + pw / 2:.2f}" y="18" font-size="14" text-anchor="middle">{escape(title)}</text>')

    groups: dict[str, list[CurveRow]] = defaultdict(list)
    for r in rows:
        groups[r.classifier].append(r)
    for i, (name, grp) in enumerate(sorted(groups.items())):
        colour = _COLOURS.get(name, "#555555")
        pts = " ".join(f"{_fmt(sx(r.train_size))},{_fmt(sy(r.mean_error))}" for r in grp)
        out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="2" points="{pts}"/>')
        ly = _TOP + 20 + 20 * i
        lx = _LEFT + pw + 15
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 25}" y2="{ly}" stroke="{colour}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 32}" y="{ly + 4}" font-size="12">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------------
# replications


@dataclass(frozen=True)
class ReplicationResult:
    train_size: int
    replication: int
    errors: dict
    flagged: dict
    redraws: int


def evaluate_classifiers(
    train: Dataset, test: Dataset, classifiers: Sequence[str],
    opts: FitOptions | None = None, audit: Callable | None = None,
) -> tuple[dict, dict]:
    """Fit each classifier on `train`; return test error rates and degradation flags."""
    errors, flagged = {}, {}
    for name in classifiers:
        degraded = False
        try:
            model = fit_classifier(name, train, opts)
        except NoInformativeFeatures:
            model = PriorOnlyModel(estimate_prior_odds(train.labels).log_r_hat, train.p)
            degraded = True
        if isinstance(model, SmartBayesModel):
            degraded = model.degraded
            if audit is not None:
                audit(model, train)
        elif hasattr(model, "separated"):
            degraded = model.separated
        pred = model.predict(test.features).predicted
        errors[name] = misclassification_rate(pred, test.labels)
        flagged[name] = int(degraded)
    return errors, flagged


def aggregate(
    results: Iterable[ReplicationResult], dataset: str, classifiers: Sequence[str]
) -> LearningCurve:
    by_size: dict[int, list[ReplicationResult]] = defaultdict(list)
    for r in results:
        by_size[r.train_size].append(r)
    rows = []
    for m in sorted(by_size):
        reps = sorted(by_size[m], key=lambda r: r.replication)
        redraws = sum(r.redraws for r in reps)
        for name in classifiers:
            errs = np.array([r.errors[name] for r in reps])
            sd = float(errs.std(ddof=1)) if errs.size > 1 else 0.0
            rows.append(CurveRow(
                dataset=dataset, classifier=CLASSIFIER_LABELS[name], train_size=m,
                mean_error=float(errs.mean()), sd_error=sd, replications=errs.size,
                redraws=redraws, flagged=sum(r.flagged[name] for r in reps),
            ))
    return LearningCurve(rows)


def run_tasks(fn, tasks: list, workers: int = 1) -> list:
    """Map `fn` over `tasks`, optionally in a process pool; order is preserved."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


# --------------------------------------------------------------------------
# real-data benchmark


@dataclass(frozen=True)
class BenchConfig:
    training_sizes: tuple[int, ...]
    replications: int = 200
    master_seed: int = 0
    classifiers: tuple[str, ...] = ("nb", "lr", "sb")
    path: str | None = None
    label_column: str | None = None
    label_map: tuple[str, str] | None = None
    rule: PreprocessRule = PreprocessRule(RuleKind.NONE)
    data: Dataset | None = None
    name: str | None = None
    fit_options: FitOptions | None = None

    def load(self) -> Dataset:
        if self.data is not None:
            return self.data
        if self.path is None:
            raise DataError("no dataset given")
        if self.rule.uses_response:
            ds = load_table(self.path)
            if self.label_column and self.label_column != self.rule.column and self.label_column in ds.column_names:
                ds = ds.select_columns([j for j, c in enumerate(ds.column_names) if c != self.label_column])
        else:
            if not self.label_column:
                raise DataError("label column required")
            ds = load_csv(self.path, self.label_column, self.label_map)
        return preprocess(ds, self.rule)

    @property
    def dataset_name(self) -> str:
        if self.name:
            return self.name
        return Path(self.path).stem if self.path else "data"


def default_training_sizes(n: int, p: int, points: int = 8) -> tuple[int, ...]:
    """Geometric ladder from 2(p+2) to 70% of n."""
    lo, hi = 2 * (p + 2), int(0.7 * n)
    if hi <= lo:
        return (min(lo, n - 1),)
    sizes = np.unique(np.round(np.geomspace(lo, hi, points)).astype(int))
    return tuple(int(s) for s in sizes)


@dataclass(frozen=True)
class _BenchTask:
    data: Dataset
    train_size: int
    replication: int
    master_seed: int
    classifiers: tuple[str, ...]
    opts: FitOptions | None


def _bench_replication(task: _BenchTask, audit=None) -> ReplicationResult:
    for attempt in range(MAX_REDRAWS):
        seed = derive_seed(task.master_seed, task.train_size, task.replication, attempt)
        try:
            train, test = split(task.data, SplitSpec(task.train_size, seed))
        except DegenerateSplitError:
            continue
        errors, flagged = evaluate_classifiers(train, test, task.classifiers, task.opts, audit)
        return ReplicationResult(task.train_size, task.replication, errors, flagged, attempt)
    raise DataError(f"every split at training size {task.train_size} was degenerate")


def run_benchmark(cfg: BenchConfig, workers: int = 1, audit: Callable | None = None) -> LearningCurve:
    """Learning curve over random m-versus-rest splits.

    Each (training size, replication) cell draws its split from
    ``derive_seed(master_seed, m, rep, attempt)``; attempts advance only when
    the training part holds a single class. `audit`, if given, is called with
    every fitted Smart Bayes model and its training data (in-process runs only).
    """
    ds = cfg.load()
    sizes = tuple(cfg.training_sizes) or default_training_sizes(ds.n, ds.p)
    for m in sizes:
        if not 1 <= m < ds.n:
            raise DataError(f"training size {m} must be below the row count {ds.n}")
    if cfg.replications < 1:
        raise ValueError("replications must be >= 1")
    for c in cfg.classifiers:
        if c not in CLASSIFIER_LABELS:
            raise ValueError(f"unknown classifier {c!r}")
    tasks = [
        _BenchTask(ds, m, rep, cfg.master_seed, tuple(cfg.classifiers), cfg.fit_options)
        for m in sizes for rep in range(cfg.replications)
    ]
    if audit is not None:
        results = [_bench_replication(t, audit) for t in tasks]
    else:
        results = run_tasks(_bench_replication, tasks, workers)
    curve = aggregate(results, cfg.dataset_name, cfg.classifiers)
    for r in curve.rows:
        if r.flagged:
            logger.info("%s m=%d: %d degraded fits", r.classifier, r.train_size, r.flagged)
    return curve
