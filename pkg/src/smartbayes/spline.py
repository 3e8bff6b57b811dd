"""Penalized cubic B-spline logistic regression for a single covariate.

The fitted function eta(x) is the log-odds of class 1 given x. It minimises

    -sum_i y_i eta(x_i) + sum_i log(1 + exp(eta(x_i))) + lam * c' P c

over spline coefficients c, where P is the integrated squared second
derivative penalty. The smoothing parameter is chosen by GCV over a grid.

The basis lives on the unit interval: x is mapped affinely from its training
range onto [0, 1] before evaluation. The curvature penalty is measured in
units of the training interquartile range, so a given lambda means the same
amount of smoothing whatever the units of x, and a few extreme points do not
change it much.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import BSpline
from scipy.linalg import cho_factor, cho_solve, LinAlgError
from scipy.special import expit

logger = logging.getLogger(__name__)

DEGREE = 3
DEFAULT_KNOTS = 10
MIN_DISTINCT = 6


class SplineError(ValueError):
    pass


def default_lambda_grid() -> np.ndarray:
    return np.logspace(-6, 6, 25)


@dataclass(frozen=True)
class FitOptions:
    max_iterations: int = 100
    score_tolerance: float = 1e-8
    lambda_grid: np.ndarray = field(default_factory=default_lambda_grid)
    ridge_floor: float = 1e-10
    interior_knots: int = DEFAULT_KNOTS

    def __post_init__(self):
        grid = np.asarray(self.lambda_grid, dtype=float)
        if grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
            raise ValueError("lambda_grid must be nonempty, positive and ascending")
        object.__setattr__(self, "lambda_grid", grid)


@dataclass(frozen=True)
class SplineBasis:
    """Cubic B-spline basis on the training range ``[lo, hi]``."""

    interior_knots: np.ndarray  # in the unit coordinate
    lo: float
    hi: float
    degree: int = DEGREE
    penalty_scale: float = 1.0  # interquartile range / range

    @property
    def knots(self) -> np.ndarray:
        k = self.degree
        return np.concatenate([np.zeros(k + 1), self.interior_knots, np.ones(k + 1)])

    @property
    def dimension(self) -> int:
        return len(self.interior_knots) + self.degree + 1

    @property
    def breakpoints(self) -> np.ndarray:
        return np.concatenate([[0.0], self.interior_knots, [1.0]])

    def to_unit(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo)

    def _spline(self, nu: int = 0) -> BSpline:
        spl = BSpline(self.knots, np.eye(self.dimension), self.degree, extrapolate=True)
        return spl.derivative(nu) if nu else spl

    def evaluate_unit(self, u, nu: int = 0) -> np.ndarray:
        """Basis functions (or their `nu`-th derivative in u) at unit-coordinate
        points, shape ``(len(u), dimension)``. Points are clipped to [0, 1]."""
        u = np.clip(np.atleast_1d(np.asarray(u, dtype=float)), 0.0, 1.0)
        return self._spline(nu)(u)

    def evaluate(self, x, nu: int = 0) -> np.ndarray:
        """Basis (derivatives are with respect to x) at points inside the range."""
        scale = (self.hi - self.lo) ** -nu
        return self.evaluate_unit(self.to_unit(x), nu) * scale

    def greville(self) -> np.ndarray:
        """Knot averages; as coefficients they reproduce the identity u -> u."""
        t, k = self.knots, self.degree
        return np.array([t[j + 1 : j + k + 1].mean() for j in range(self.dimension)])


def build_basis(x, interior_knot_count: int = DEFAULT_KNOTS) -> SplineBasis:
    """Cubic basis with interior knots at equally spaced quantiles of the
    distinct values of `x`.

    Raises
    ------
    SplineError
        If `x` has fewer than ``degree + 2`` distinct values.
    """
    x = np.asarray(x, dtype=float)
    distinct = np.unique(x)
    if distinct.size < DEGREE + 2:
        raise SplineError(f"need at least {DEGREE + 2} distinct values, got {distinct.size}")
    if interior_knot_count < 1:
        raise SplineError("interior_knot_count must be >= 1")
    lo, hi = float(distinct[0]), float(distinct[-1])
    q1, q3 = np.quantile(x, [0.25, 0.75])
    spread = (q3 - q1) / (hi - lo)
    probs = np.arange(1, interior_knot_count + 1) / (interior_knot_count + 1)
    knots = np.quantile(distinct, probs)
    knots = np.unique((knots - lo) / (hi - lo))
    knots = knots[(knots > 0.0) & (knots < 1.0)]
    return SplineBasis(interior_knots=knots, lo=lo, hi=hi, penalty_scale=float(spread) if spread > 0 else 1.0)


def curvature_penalty(basis: SplineBasis) -> np.ndarray:
    """Gram matrix of second derivatives in the coordinate
    ``v = u / penalty_scale`` (x in interquartile-range units).

    Second derivatives of cubic pieces are linear, so the two-point
    Gauss-Legendre rule on every knot span is exact. The change of variable
    from u contributes the factor ``penalty_scale**3``.
    """
    nodes, weights = np.polynomial.legendre.leggauss(2)
    bp = basis.breakpoints
    a, b = bp[:-1], bp[1:]
    half = (b - a) / 2
    pts = ((a + b) / 2)[:, None] + half[:, None] * nodes[None, :]
    w = (half[:, None] * weights[None, :]).ravel()
    D2 = basis.evaluate_unit(pts.ravel(), nu=2)
    P = D2.T @ (w[:, None] * D2) * basis.penalty_scale**3
    return (P + P.T) / 2


@dataclass(frozen=True)
class PenalizedSplineFit:
    basis: SplineBasis
    coefficients: np.ndarray
    lam: float
    edf: float
    deviance: float
    converged: bool
    iterations: int
    score_norm: float
    n: int

    def gcv(self) -> float:
        return gcv_score(self, self.n)


class _PenaltyEigen:
    """Penalty in its eigenbasis with the affine null space split off exactly.

    Working in rotated coordinates theta = U' c keeps the penalty gradient free
    of the cancellation error that ``lam * P @ c`` suffers at large lambda.
    """

    def __init__(self, P: np.ndarray):
        s, U = np.linalg.eigh(P)
        s = s.copy()
        s[:2] = 0.0  # cubic-spline penalty annihilates exactly the affine functions
        s[s < 0] = 0.0
        self.s = s
        self.U = U


def _objective_terms(eta, y):
    return float(np.sum(np.logaddexp(0.0, eta) - y * eta))


def penalized_objective(coefficients, x, y, basis: SplineBasis, P, lam) -> float:
    """Penalized negative log-likelihood at spline coefficients (x inside range)."""
    c = np.asarray(coefficients, dtype=float)
    eta = basis.evaluate(x) @ c
    return _objective_terms(eta, np.asarray(y, dtype=float)) + lam * float(c @ P @ c)


def penalized_score(coefficients, x, y, basis: SplineBasis, P, lam) -> np.ndarray:
    c = np.asarray(coefficients, dtype=float)
    B = basis.evaluate(x)
    return B.T @ (expit(B @ c) - np.asarray(y, dtype=float)) + 2 * lam * (P @ c)


def _irls(B, y, eig: _PenaltyEigen, lam, theta0, opts: FitOptions, trace=None):
    """Newton iterations with step-halving in rotated coordinates."""
    U, s = eig.U, eig.s
    X = B @ U
    pen = 2.0 * lam * s

    def objective(th):
        e = X @ th
        return e, _objective_terms(e, y) + lam * float(np.sum(s * th**2))

    theta = theta0.copy()
    eta, obj = objective(theta)
    if trace is not None:
        trace.append(obj)
    iterations = 0
    while True:
        mu = expit(eta)
        grad = X.T @ (mu - y) + pen * theta
        score_norm = float(np.max(np.abs(U @ grad)))
        if score_norm <= opts.score_tolerance or iterations >= opts.max_iterations:
            break
        w = mu * (1.0 - mu)
        H = X.T @ (w[:, None] * X)
        H[np.diag_indices_from(H)] += pen + opts.ridge_floor
        try:
            step = cho_solve(cho_factor(H), grad)
        except LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        # below this predicted decrease the objective comparison is rounding noise
        noise = 1e-13 * (1.0 + abs(obj))
        t = 1.0
        accepted = False
        for _ in range(60):
            cand = theta - t * step
            cand_eta, cand_obj = objective(cand)
            if cand_obj <= obj or t * float(grad @ step) < noise:
                accepted = True
                break
            t /= 2
        if not accepted:
            break
        theta, eta, obj = cand, cand_eta, cand_obj
        iterations += 1
        if trace is not None:
            trace.append(obj)

    converged = score_norm <= opts.score_tolerance
    w = mu * (1.0 - mu)
    XtWX = X.T @ (w[:, None] * X)
    H = XtWX.copy()
    H[np.diag_indices_from(H)] += pen + opts.ridge_floor
    try:
        edf = float(np.trace(cho_solve(cho_factor(H), XtWX)))
    except LinAlgError:
        edf = float(np.trace(np.linalg.lstsq(H, XtWX, rcond=None)[0]))
    deviance = 2.0 * _objective_terms(eta, y)
    return theta, edf, deviance, converged, iterations, score_norm


def fit_penalized_logistic(
    x, y, basis: SplineBasis, P: np.ndarray, lam: float,
    opts: FitOptions | None = None, start: np.ndarray | None = None,
    _eig: _PenaltyEigen | None = None, trace: list | None = None,
) -> PenalizedSplineFit:
    """Fit eta at a fixed smoothing parameter by penalized IRLS.

    `start` optionally gives initial spline coefficients (warm start). Fits
    that hit ``max_iterations`` are returned with ``converged=False``. If
    `trace` is a list, the objective after every accepted step is appended.
    """
    opts = opts or FitOptions()
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise SplineError("x and y lengths differ")
    if np.unique(y).size < 2:
        raise SplineError("both classes must be present")
    eig = _eig or _PenaltyEigen(P)
    B = basis.evaluate(x)
    if start is None:
        ybar = y.mean()
        # constant function: all coefficients equal
        start = np.full(basis.dimension, np.log(ybar / (1 - ybar)))
    theta0 = eig.U.T @ start
    theta, edf, dev, conv, it, score = _irls(B, y, eig, lam, theta0, opts, trace)
    if not conv:
        logger.debug("penalized fit at lambda=%g not converged (score %.3g)", lam, score)
    return PenalizedSplineFit(
        basis=basis, coefficients=eig.U @ theta, lam=float(lam), edf=edf,
        deviance=dev, converged=conv, iterations=it, score_norm=score, n=x.size,
    )


def gcv_score(fit: PenalizedSplineFit, n: int) -> float:
    """Deviance-based GCV: ``n * D / (n - edf)**2``; infinite once edf >= n."""
    if fit.edf >= n:
        return float("inf")
    return n * fit.deviance / (n - fit.edf) ** 2


def lambda_path(x, y, basis: SplineBasis, P, opts: FitOptions | None = None):
    """Fits at every grid value, warm-started from the largest lambda down.

    Returned in ascending-lambda order.
    """
    opts = opts or FitOptions()
    eig = _PenaltyEigen(P)
    fits = []
    start = None
    for lam in opts.lambda_grid[::-1]:
        fit = fit_penalized_logistic(x, y, basis, P, lam, opts, start=start, _eig=eig)
        if np.all(np.isfinite(fit.coefficients)):
            start = fit.coefficients
        fits.append(fit)
    return fits[::-1]


def select_lambda(x, y, basis: SplineBasis, P, opts: FitOptions | None = None) -> PenalizedSplineFit:
    """Return the grid fit with the smallest GCV score (ties go to larger lambda)."""
    fits = lambda_path(x, y, basis, P, opts)
    n = np.asarray(x).size
    best, best_score = None, np.inf
    for fit in fits:
        score = gcv_score(fit, n)
        if not np.isfinite(score) or not np.all(np.isfinite(fit.coefficients)):
            continue
        if score <= best_score:
            best, best_score = fit, score
    if best is None:
        raise SplineError("every grid fit failed")
    return best


def predict_eta(fit: PenalizedSplineFit, x_new) -> np.ndarray:
    """Evaluate the fitted log-odds; linear continuation outside the range."""
    basis, c = fit.basis, fit.coefficients
    x_new = np.atleast_1d(np.asarray(x_new, dtype=float))
    inside = basis.evaluate(np.clip(x_new, basis.lo, basis.hi)) @ c
    below, above = x_new < basis.lo, x_new > basis.hi
    if below.any() or above.any():
        ends = np.array([basis.lo, basis.hi])
        val = basis.evaluate(ends) @ c
        slope = basis.evaluate(ends, nu=1) @ c
        inside = inside.copy()
        inside[below] = val[0] + (x_new[below] - basis.lo) * slope[0]
        inside[above] = val[1] + (x_new[above] - basis.hi) * slope[1]
    return inside


def with_coefficients(fit: PenalizedSplineFit, coefficients) -> PenalizedSplineFit:
    return replace(fit, coefficients=np.asarray(coefficients, dtype=float))
