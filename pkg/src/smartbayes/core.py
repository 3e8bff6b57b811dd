"""Datasets, CSV ingestion, preprocessing rules, splitting and error metrics."""

from __future__ import annotations

import csv
import enum
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

MISSING_TOKENS = frozenset({"", "na", "nan", "null", "none", "?"})


class DataError(ValueError):
    """Raised for malformed or unusable input data."""


class DegenerateSplitError(DataError):
    """The training part of a split contains a single class."""


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    column_names: tuple[str, ...]
    dropped_rows: int = 0

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels)
        if X.ndim != 2:
            raise DataError("feature matrix must be two-dimensional")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise DataError(f"dataset must have n >= 1 and p >= 1, got {X.shape}")
        if y.shape != (X.shape[0],):
            raise DataError("label vector length does not match feature rows")
        if not np.all((y == 0) | (y == 1)):
            raise DataError("labels must be 0 or 1")
        if not np.all(np.isfinite(X)):
            raise DataError("features contain missing or non-finite values")
        if len(self.column_names) != X.shape[1]:
            raise DataError("column_names length does not match feature columns")
        X.setflags(write=False)
        y = y.astype(np.int8)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "column_names", tuple(self.column_names))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def subset(self, rows) -> "Dataset":
        return Dataset(self.features[rows], self.labels[rows], self.column_names)

    def select_columns(self, cols: Sequence[int]) -> "Dataset":
        cols = list(cols)
        return Dataset(
            self.features[:, cols],
            self.labels,
            tuple(self.column_names[c] for c in cols),
            self.dropped_rows,
        )

    def column(self, name: str) -> np.ndarray:
        try:
            return self.features[:, self.column_names.index(name)]
        except ValueError:
            raise DataError(f"column {name!r} not found") from None


def _parse_float(cell: str) -> float | None:
    cell = cell.strip()
    if cell.lower() in MISSING_TOKENS:
        return None
    try:
        value = float(cell)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def _read_rows(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}:{lineno}: ragged row ({len(row)} fields, header has {len(header)})"
                )
            rows.append(row)
    return header, rows


def _numeric_block(header, rows, columns):
    """Parse `columns` of `rows`; return matrix with NaN for unparseable cells.

    Columns in which no cell parses at all are treated as categorical and
    removed (categorical encoding is not supported).
    """
    values = np.full((len(rows), len(columns)), np.nan)
    for i, row in enumerate(rows):
        for j, c in enumerate(columns):
            v = _parse_float(row[c])
            if v is not None:
                values[i, j] = v
    keep = [j for j in range(len(columns)) if len(rows) == 0 or np.isfinite(values[:, j]).any()]
    dropped = [header[columns[j]] for j in range(len(columns)) if j not in keep]
    if dropped:
        logger.warning("dropping non-numeric columns: %s", ", ".join(dropped))
    return values[:, keep], [header[columns[j]] for j in keep]


def _parse_labels(raw: list[str], label_map: tuple[str, str] | None):
    """Map raw label cells to 0/1 (None for missing)."""
    out: list[int | None] = []
    seen = set()
    for cell in raw:
        c = cell.strip()
        if c.lower() in MISSING_TOKENS:
            out.append(None)
            continue
        if label_map is not None:
            neg, pos = label_map
            if c == neg:
                out.append(0)
            elif c == pos:
                out.append(1)
            else:
                seen.add(c)
                out.append(-1)
            continue
        v = _parse_float(c)
        if v == 0.0:
            out.append(0)
        elif v == 1.0:
            out.append(1)
        else:
            seen.add(c)
            out.append(-1)
    if seen:
        raise DataError(f"non-binary labels: {sorted(seen)[:5]}")
    return out


def load_csv(path, label_column: str, label_map: tuple[str, str] | None = None) -> Dataset:
    """Read a header-ed CSV into a :class:`Dataset`.

    Rows with a missing or unparseable cell are dropped and counted in
    ``Dataset.dropped_rows``. Labels must be literal 0/1 unless `label_map`
    gives the ``(negative, positive)`` spellings.
    """
    header, rows = _read_rows(path)
    if label_column not in header:
        raise DataError(f"label column {label_column!r} not in header")
    li = header.index(label_column)
    labels = _parse_labels([r[li] for r in rows], label_map)
    feature_cols = [j for j in range(len(header)) if j != li]
    if not feature_cols:
        raise DataError("no feature columns")
    X, names = _numeric_block(header, rows, feature_cols)
    if X.shape[1] == 0:
        raise DataError("no numeric feature columns")
    ok = np.isfinite(X).all(axis=1) & np.array([lab is not None for lab in labels], dtype=bool)
    dropped = int((~ok).sum())
    if dropped:
        logger.warning("%s: dropped %d rows with missing or unparseable cells", path, dropped)
    y = np.array([lab for lab, keep in zip(labels, ok) if keep], dtype=np.int8)
    if y.size == 0:
        raise DataError("no complete rows")
    if np.unique(y).size < 2:
        raise DataError("fewer than 2 distinct labels after ingestion")
    return Dataset(X[ok], y, tuple(names), dropped_rows=dropped)


def load_table(path) -> Dataset:
    """Read an all-feature CSV (no label column); labels are set to 0.

    Used when labels are derived from a response column by :func:`preprocess`.
    """
    header, rows = _read_rows(path)
    X, names = _numeric_block(header, rows, list(range(len(header))))
    if X.shape[1] == 0:
        raise DataError("no numeric columns")
    ok = np.isfinite(X).all(axis=1)
    dropped = int((~ok).sum())
    if dropped:
        logger.warning("%s: dropped %d rows with missing or unparseable cells", path, dropped)
    if not ok.any():
        raise DataError("no complete rows")
    return Dataset(X[ok], np.zeros(int(ok.sum()), dtype=np.int8), tuple(names), dropped)


# --------------------------------------------------------------------------
# preprocessing


class RuleKind(enum.Enum):
    NONE = "none"
    DROP_NONCONTINUOUS = "drop-noncontinuous"
    QUARTILE_FILTER = "quartile-filter"
    MEDIAN_BINARIZE = "median-binarize"


@dataclass(frozen=True)
class PreprocessRule:
    kind: RuleKind
    column: str | None = None
    threshold: int = 10

    @classmethod
    def parse(cls, text: str) -> "PreprocessRule":
        """Parse the CLI form: ``none``, ``drop-noncontinuous[:K]``,
        ``quartile-filter:COL`` or ``median-binarize:COL``."""
        name, _, arg = text.partition(":")
        try:
            kind = RuleKind(name)
        except ValueError:
            raise DataError(f"unknown preprocess rule {text!r}") from None
        if kind in (RuleKind.QUARTILE_FILTER, RuleKind.MEDIAN_BINARIZE):
            if not arg:
                raise DataError(f"{name} needs a response column, e.g. {name}:COL")
            return cls(kind, column=arg)
        if kind is RuleKind.DROP_NONCONTINUOUS and arg:
            return cls(kind, threshold=int(arg))
        return cls(kind)

    @property
    def uses_response(self) -> bool:
        return self.kind in (RuleKind.QUARTILE_FILTER, RuleKind.MEDIAN_BINARIZE)


def quantile7(values, q: float) -> float:
    """Sample quantile by linear interpolation between order statistics."""
    v = np.sort(np.asarray(values, dtype=float))
    h = (v.size - 1) * q
    lo = math.floor(h)
    hi = min(lo + 1, v.size - 1)
    return float(v[lo] + (h - lo) * (v[hi] - v[lo]))


def preprocess(ds: Dataset, rule: PreprocessRule) -> Dataset:
    if rule.kind is RuleKind.NONE:
        return ds
    if rule.kind is RuleKind.DROP_NONCONTINUOUS:
        keep = [
            j for j in range(ds.p) if np.unique(ds.features[:, j]).size >= rule.threshold
        ]
        if not keep:
            raise DataError("no continuous columns remain")
        if len(keep) < ds.p:
            logger.info(
                "dropping non-continuous columns: %s",
                ", ".join(ds.column_names[j] for j in range(ds.p) if j not in keep),
            )
        return ds.select_columns(keep)

    if rule.column not in ds.column_names:
        raise DataError(f"response column {rule.column!r} absent")
    ri = ds.column_names.index(rule.column)
    response = ds.features[:, ri]
    rest = [j for j in range(ds.p) if j != ri]
    if not rest:
        raise DataError("no feature columns besides the response")
    X = ds.features[:, rest]
    names = tuple(ds.column_names[j] for j in rest)

    if rule.kind is RuleKind.QUARTILE_FILTER:
        q1, q3 = quantile7(response, 0.25), quantile7(response, 0.75)
        low, high = response < q1, response > q3
        keep = low | high
        if not keep.any():
            raise DataError("quartile filter removed every row")
        labels = high[keep].astype(np.int8)
        out = Dataset(X[keep], labels, names, ds.dropped_rows)
    else:
        med = float(np.median(response))
        out = Dataset(X, (response > med).astype(np.int8), names, ds.dropped_rows)
    if np.unique(out.labels).size < 2:
        raise DataError("preprocessing produced a single class")
    return out


# --------------------------------------------------------------------------
# splitting and metrics


class SplitMode(enum.Enum):
    RANDOM_M_REST_TEST = "random-m-rest-test"
    HALF_HALF = "half-half"


@dataclass(frozen=True)
class SplitSpec:
    train_size: int
    seed: int
    mode: SplitMode = SplitMode.RANDOM_M_REST_TEST


def split_indices(n: int, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    if spec.mode is SplitMode.HALF_HALF:
        if n % 2:
            raise DataError(f"half/half split needs an even sample count, got {n}")
        m = n // 2
    else:
        m = spec.train_size
        if not 1 <= m < n:
            raise DataError(f"training size {m} must satisfy 1 <= m < n = {n}")
    perm = np.random.default_rng(spec.seed).permutation(n)
    return np.sort(perm[:m]), np.sort(perm[m:])


def split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Partition `ds` into train and test sets, deterministically in `spec.seed`.

    Raises
    ------
    DegenerateSplitError
        If the training rows hold only one class.
    """
    train_idx, test_idx = split_indices(ds.n, spec)
    if np.unique(ds.labels[train_idx]).size < 2:
        raise DegenerateSplitError("degenerate training split")
    return ds.subset(train_idx), ds.subset(test_idx)


def misclassification_rate(predicted, truth) -> float:
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape:
        raise ValueError("length mismatch")
    if predicted.size == 0:
        raise ValueError("empty label vectors")
    return float(np.mean(predicted != truth))


@dataclass(frozen=True)
class PredictionResult:
    scores: np.ndarray
    predicted: np.ndarray = field(init=False)

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=float)
        object.__setattr__(self, "scores", scores)
        # ties go to class 1
        object.__setattr__(self, "predicted", (scores >= 0).astype(np.int8))
