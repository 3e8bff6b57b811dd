"""Multivariate Gaussian / t samplers and the two-class simulation study."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bench import (
    MAX_REDRAWS,
    LearningCurve,
    ReplicationResult,
    aggregate,
    derive_seed,
    evaluate_classifiers,
    run_tasks,
)
from .core import DataError, Dataset, DegenerateSplitError, SplitMode, SplitSpec, split
from .spline import FitOptions

logger = logging.getLogger(__name__)

JITTER_START = 1e-10
JITTER_MAX = 1e-8


class CholeskyError(ValueError):
    pass


def cholesky_with_jitter(cov: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor, adding ``c * trace/p`` to the diagonal if needed.

    `c` starts at 0, then 1e-10 and grows tenfold up to 1e-8. Returns the
    factor and the diagonal jitter used.
    """
    cov = np.asarray(cov, dtype=float)
    p = cov.shape[0]
    unit = max(float(np.trace(cov)) / p, np.finfo(float).tiny)
    c = 0.0
    while True:
        try:
            jitter = c * unit
            return np.linalg.cholesky(cov + jitter * np.eye(p)), jitter
        except np.linalg.LinAlgError:
            c = JITTER_START if c == 0.0 else c * 10
            if c > JITTER_MAX * (1 + 1e-9):
                raise CholeskyError("covariance not positive definite after jitter") from None


@dataclass(frozen=True)
class MvParams:
    mean: np.ndarray
    covariance: np.ndarray
    df: float | None = None

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError("covariance shape does not match mean")
        if np.max(np.abs(cov - cov.T)) > 1e-12 * max(1.0, np.max(np.abs(cov))):
            raise ValueError("covariance is not symmetric")
        if self.df is not None and not self.df > 0:
            raise ValueError("df must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def p(self) -> int:
        return self.mean.size

    def with_df(self, df: float | None) -> "MvParams":
        return MvParams(self.mean, self.covariance, df)


def sample_mv(params: MvParams, count: int, seed) -> np.ndarray:
    """Draw `count` rows from a multivariate Gaussian, or a multivariate t
    when ``params.df`` is set (one chi-square mixing draw per row)."""
    rng = np.random.default_rng(seed)
    L, _ = cholesky_with_jitter(params.covariance)
    eps = rng.standard_normal((count, params.p))
    draws = eps @ L.T
    if params.df is not None:
        w = rng.chisquare(params.df, size=count)
        draws = draws / np.sqrt(w / params.df)[:, None]
    return params.mean + draws


def ionosphere_like_params(ds: Dataset) -> tuple[MvParams, MvParams]:
    """Per-class sample means and covariances (divisor n-1) of a dataset,
    with the diagonal jitter needed to make each covariance factorable."""
    out = []
    for label in (0, 1):
        X = ds.features[ds.labels == label]
        if X.shape[0] < 2:
            raise DataError(f"class {label} has fewer than 2 rows")
        cov = np.atleast_2d(np.cov(X, rowvar=False, ddof=1))
        _, jitter = cholesky_with_jitter(cov)
        if jitter:
            logger.info("class %d covariance jittered by %.3g", label, jitter)
        cov = cov + jitter * np.eye(cov.shape[0])
        out.append(MvParams(X.mean(axis=0), (cov + cov.T) / 2))
    return out[0], out[1]


def wishart_like_params(p: int, seed: int, separation: float = 1.0) -> tuple[MvParams, MvParams]:
    """Two classes with distinct random covariances and a random mean shift.

    Each covariance is ``D W D`` with W a normalised Wishart draw on p + 3
    degrees of freedom and D a random diagonal scaling in [0.5, 2]; the class
    1 mean is a Gaussian vector of norm `separation`.
    """
    rng = np.random.default_rng(seed)
    covs = []
    for _ in range(2):
        A = rng.standard_normal((p, p + 3))
        W = A @ A.T / (p + 3)
        d = rng.uniform(0.5, 2.0, size=p)
        C = d[:, None] * W * d[None, :]
        covs.append((C + C.T) / 2)
    shift = rng.standard_normal(p)
    shift *= separation / np.linalg.norm(shift)
    return MvParams(np.zeros(p), covs[0]), MvParams(shift, covs[1])


@dataclass(frozen=True)
class SimulationPlan:
    class0: MvParams
    class1: MvParams
    training_sizes: tuple[int, ...]
    replications: int
    master_seed: int
    classifiers: tuple[str, ...] = ("nb", "lr", "sb")
    name: str = "simulation"
    fit_options: FitOptions | None = None

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not self.training_sizes or any(m < 1 for m in self.training_sizes):
            raise ValueError("training sizes must be nonempty and positive")
        if list(self.training_sizes) != sorted(self.training_sizes):
            raise ValueError("training sizes must be ascending")
        if self.class0.p != self.class1.p:
            raise ValueError("class dimensions differ")


def draw_replication(plan: SimulationPlan, m: int, seed: int) -> Dataset:
    """`m` rows from each class, stacked with labels 0 then 1."""
    s0, s1 = np.random.SeedSequence(seed).spawn(2)
    X = np.vstack([sample_mv(plan.class0, m, s0), sample_mv(plan.class1, m, s1)])
    y = np.r_[np.zeros(m, dtype=np.int8), np.ones(m, dtype=np.int8)]
    names = tuple(f"x{k + 1}" for k in range(plan.class0.p))
    return Dataset(X, y, names)


def _simulate_replication(task, audit=None) -> ReplicationResult:
    plan, m, rep = task
    for attempt in range(MAX_REDRAWS):
        seed = derive_seed(plan.master_seed, m, rep, attempt)
        data = draw_replication(plan, m, seed)
        try:
            train, test = split(data, SplitSpec(m, seed, SplitMode.HALF_HALF))
        except DegenerateSplitError:
            continue
        errors, flagged = evaluate_classifiers(train, test, plan.classifiers, plan.fit_options, audit)
        return ReplicationResult(m, rep, errors, flagged, attempt)
    raise DataError(f"every draw at m={m} produced a degenerate split")


def run_simulation(plan: SimulationPlan, workers: int = 1, audit: Callable | None = None) -> LearningCurve:
    """Learning curve for the plan: for each size m and replication, draw m
    rows per class, train on a random half, test on the other half.

    Cell seeds come from ``derive_seed(master_seed, m, rep, attempt)``; a new
    attempt is drawn only when the training half holds a single class.
    """
    tasks = [(plan, m, rep) for m in plan.training_sizes for rep in range(plan.replications)]
    if audit is not None:
        results = [_simulate_replication(t, audit) for t in tasks]
    else:
        results = run_tasks(_simulate_replication, tasks, workers)
    return aggregate(results, plan.name, plan.classifiers)
