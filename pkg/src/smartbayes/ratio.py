"""Marginal log density-ratio models.

A model maps one feature value x to z(x) = log(g1(x) / g0(x)), the log ratio
of the class-conditional densities. The spline estimator fits the log-odds
eta(x) by penalized logistic regression and removes the prior odds:
z(x) = eta(x) - log(n1 / n0).
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logit

from . import spline
from .spline import FitOptions, PenalizedSplineFit

logger = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-9


class RatioKind(enum.Enum):
    SPLINE = "spline"
    GAUSSIAN = "gaussian"
    CONSTANT = "constant"


@dataclass(frozen=True)
class PriorOdds:
    n1: int
    n0: int

    def __post_init__(self):
        if self.n1 < 1 or self.n0 < 1:
            raise ValueError("both classes must be present")

    @property
    def r_hat(self) -> float:
        return self.n1 / self.n0

    @property
    def log_r_hat(self) -> float:
        return math.log(self.n1) - math.log(self.n0)


def estimate_prior_odds(y) -> PriorOdds:
    y = np.asarray(y)
    n1 = int(np.sum(y == 1))
    return PriorOdds(n1=n1, n0=int(y.size - n1))


@dataclass(frozen=True)
class GaussianParams:
    mu0: float
    mu1: float
    sigma2: float

    @property
    def gamma(self) -> float:
        return (self.mu1 - self.mu0) / self.sigma2

    @property
    def delta(self) -> float:
        return -(self.mu1**2 - self.mu0**2) / (2 * self.sigma2)


def pooled_gaussian_params(x, y) -> GaussianParams:
    """Class means and the pooled within-class variance (divisor n)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    x0, x1 = x[y == 0], x[y == 1]
    mu0, mu1 = float(x0.mean()), float(x1.mean())
    ss = float(np.sum((x0 - mu0) ** 2) + np.sum((x1 - mu1) ** 2))
    return GaussianParams(mu0, mu1, max(ss / x.size, VARIANCE_FLOOR))


@dataclass(frozen=True)
class MarginalRatioModel:
    kind: RatioKind
    prior_odds: PriorOdds
    feature_index: int = 0
    spline_fit: PenalizedSplineFit | None = None
    gaussian: GaussianParams | None = None

    def __post_init__(self):
        has = (self.spline_fit is not None, self.gaussian is not None)
        want = {
            RatioKind.SPLINE: (True, False),
            RatioKind.GAUSSIAN: (False, True),
            RatioKind.CONSTANT: (False, False),
        }[self.kind]
        if has != want:
            raise ValueError(f"{self.kind.name} model has the wrong parameter blocks")

    def __call__(self, x_new) -> np.ndarray:
        return eval_log_ratio(self, x_new)


def eval_log_ratio(model: MarginalRatioModel, x_new) -> np.ndarray:
    x_new = np.atleast_1d(np.asarray(x_new, dtype=float))
    if model.kind is RatioKind.SPLINE:
        return spline.predict_eta(model.spline_fit, x_new) - model.prior_odds.log_r_hat
    if model.kind is RatioKind.GAUSSIAN:
        g = model.gaussian
        return g.gamma * x_new + g.delta
    return np.zeros_like(x_new)


def fit_marginal_ratio(
    x, y, opts: FitOptions | None = None, kind: RatioKind = RatioKind.SPLINE,
    feature_index: int = 0,
) -> MarginalRatioModel:
    """Fit the log density ratio of one feature.

    Spline fits fall back to a CONSTANT (zero) model when the feature has
    fewer than six distinct values or when every smoothing-grid fit fails.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    prior = estimate_prior_odds(y)
    if kind is RatioKind.CONSTANT:
        return MarginalRatioModel(RatioKind.CONSTANT, prior, feature_index)
    if kind is RatioKind.GAUSSIAN:
        return MarginalRatioModel(
            RatioKind.GAUSSIAN, prior, feature_index, gaussian=pooled_gaussian_params(x, y)
        )

    opts = opts or FitOptions()
    distinct = np.unique(x).size
    if distinct < spline.MIN_DISTINCT:
        return MarginalRatioModel(RatioKind.CONSTANT, prior, feature_index)
    n_knots = min(opts.interior_knots, distinct - 4)
    try:
        basis = spline.build_basis(x, n_knots)
        P = spline.curvature_penalty(basis)
        fit = spline.select_lambda(x, y, basis, P, opts)
    except (spline.SplineError, np.linalg.LinAlgError) as exc:
        logger.warning("feature %d: spline fit failed (%s); using constant ratio", feature_index, exc)
        return MarginalRatioModel(RatioKind.CONSTANT, prior, feature_index)
    return MarginalRatioModel(RatioKind.SPLINE, prior, feature_index, spline_fit=fit)


# --------------------------------------------------------------------------
# exponential-family ratios


class Family(enum.Enum):
    GAUSSIAN = "gaussian"
    BERNOULLI = "bernoulli"
    POISSON = "poisson"


@dataclass(frozen=True)
class ExponentialFamilyRatio:
    """Exact log density ratio ``z(x) = gamma * x + delta`` of two members of
    one exponential family sharing a dispersion."""

    family: Family
    gamma: float
    delta: float

    def __call__(self, x) -> np.ndarray:
        return self.gamma * np.asarray(x, dtype=float) + self.delta

    @property
    def x_per_unit_z(self) -> float:
        """Change in x that moves z by one."""
        return 1.0 / self.gamma


def gamma_factor(family: Family, mu0: float, mu1: float, sigma2: float | None = None) -> ExponentialFamilyRatio:
    family = Family(family)
    if family is Family.GAUSSIAN:
        if sigma2 is None or not sigma2 > 0:
            raise ValueError("Gaussian ratio needs sigma2 > 0")
        g = GaussianParams(mu0, mu1, sigma2)
        return ExponentialFamilyRatio(family, g.gamma, g.delta)
    if family is Family.BERNOULLI:
        if not (0 < mu0 < 1 and 0 < mu1 < 1):
            raise ValueError("Bernoulli means must lie in (0, 1)")
        gamma = float(logit(mu1) - logit(mu0))
        return ExponentialFamilyRatio(family, gamma, math.log1p(-mu1) - math.log1p(-mu0))
    if not (mu0 > 0 and mu1 > 0):
        raise ValueError("Poisson means must be positive")
    return ExponentialFamilyRatio(family, math.log(mu1) - math.log(mu0), mu0 - mu1)
