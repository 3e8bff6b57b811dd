"""Logistic regression, Gaussian Naive Bayes and Smart Bayes classifiers.

All three produce a decision score on the log-odds scale; an observation is
assigned to class 1 when its score is >= 0.

Smart Bayes replaces each raw feature x_k by its estimated marginal log
density ratio z_k(x_k) and fits a logistic regression on the z's. With the
logistic layer frozen at intercept log(n1/n0) and unit weights it is exactly
Naive Bayes built from the same marginal ratios.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import expit

from .core import Dataset, PredictionResult
from .ratio import (
    GaussianParams,
    MarginalRatioModel,
    PriorOdds,
    RatioKind,
    VARIANCE_FLOOR,
    estimate_prior_odds,
    eval_log_ratio,
    fit_marginal_ratio,
)
from .spline import FitOptions, PenalizedSplineFit, SplineBasis

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
COEF_CAP = 30.0


class ModelError(ValueError):
    pass


class NoInformativeFeatures(ModelError):
    pass


def _check_binary(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if not np.all((y == 0) | (y == 1)):
        raise ModelError("labels must be 0/1")
    if np.unique(y).size < 2:
        raise ModelError("both classes must be present")
    return y


def _nll(eta, y) -> float:
    return float(np.sum(np.logaddexp(0.0, eta) - y * eta))


# --------------------------------------------------------------------------
# logistic regression


@dataclass(frozen=True)
class LogisticModel:
    intercept: float
    coefficients: np.ndarray
    converged: bool = True
    iterations: int = 0
    aliased: tuple[int, ...] = ()
    separated: bool = False

    @property
    def q(self) -> int:
        return self.coefficients.size

    def decision_function(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.q:
            raise ModelError(f"expected {self.q} columns, got {X.shape[1]}")
        return self.intercept + X @ self.coefficients

    def predict(self, X) -> PredictionResult:
        return PredictionResult(self.decision_function(X))


def _aliased_columns(Z: np.ndarray, tol: float = 1e-8) -> list[int]:
    """Columns of the centred design `Z` lying in the span of earlier ones."""
    basis: list[np.ndarray] = []
    aliased = []
    for j in range(Z.shape[1]):
        v = Z[:, j]
        norm = np.linalg.norm(v)
        r = v.copy()
        for q in basis:
            r -= (q @ r) * q
        rn = np.linalg.norm(r)
        if norm == 0.0 or rn <= tol * norm:
            aliased.append(j)
        else:
            basis.append(r / rn)
    return aliased


def fit_logistic(X, y, max_iterations: int = 100, tolerance: float = 1e-8) -> LogisticModel:
    """Maximum-likelihood logistic regression by IRLS with step-halving.

    Columns are centred and scaled internally; the MLE is invariant to that.
    Aliased columns are dropped left to right and get coefficient 0. If any
    standardized slope passes ``COEF_CAP`` the data are taken as separated:
    the whole parameter vector is shrunk so its largest standardized slope is
    exactly the cap (this keeps the decision boundary) and the model is
    flagged ``converged=False``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = _check_binary(y)
    n, q = X.shape
    if y.size != n:
        raise ModelError("X and y lengths differ")
    if q < 1:
        raise ModelError("need at least one column")

    center = X.mean(axis=0)
    Zc = X - center
    aliased = _aliased_columns(Zc)
    keep = [j for j in range(q) if j not in aliased]
    if aliased:
        logger.info("dropping aliased columns %s", aliased)
    scale = Zc[:, keep].std(axis=0)
    Z = np.column_stack([np.ones(n), Zc[:, keep] / scale])
    raw = np.column_stack([np.ones(n), X[:, keep]])

    ybar = y.mean()
    beta = np.zeros(Z.shape[1])
    beta[0] = math.log(ybar / (1 - ybar))
    eta = Z @ beta
    obj = _nll(eta, y)
    converged = separated = False
    iterations = 0
    while True:
        mu = expit(eta)
        if np.max(np.abs(raw.T @ (mu - y))) <= tolerance:
            converged = True
            break
        if iterations >= max_iterations:
            break
        w = mu * (1 - mu)
        H = Z.T @ (w[:, None] * Z)
        H[np.diag_indices_from(H)] += 1e-12
        g = Z.T @ (mu - y)
        try:
            step = cho_solve(cho_factor(H), g)
        except LinAlgError:
            step = np.linalg.lstsq(H, g, rcond=None)[0]
        noise = 1e-13 * (1.0 + abs(obj))
        t, accepted = 1.0, False
        for _ in range(60):
            cand = beta - t * step
            cand_eta = Z @ cand
            cand_obj = _nll(cand_eta, y)
            if cand_obj <= obj or t * float(g @ step) < noise:
                accepted = True
                break
            t /= 2
        if not accepted:
            break
        beta, eta, obj = cand, cand_eta, cand_obj
        iterations += 1
        biggest = np.max(np.abs(beta[1:])) if beta.size > 1 else 0.0
        if biggest > COEF_CAP:
            beta = beta * (COEF_CAP / biggest)
            separated = True
            break

    slopes = beta[1:] / scale
    coef = np.zeros(q)
    coef[keep] = slopes
    intercept = float(beta[0] - slopes @ center[keep])
    if separated:
        logger.info("logistic fit separated; parameters capped")
    return LogisticModel(
        intercept=intercept, coefficients=coef, converged=converged and not separated,
        iterations=iterations, aliased=tuple(aliased), separated=separated,
    )


def predict_logistic(model: LogisticModel, X_new) -> PredictionResult:
    return model.predict(X_new)


def deviance(scores, y) -> float:
    return 2.0 * _nll(np.asarray(scores, dtype=float), np.asarray(y, dtype=float))


# --------------------------------------------------------------------------
# Naive Bayes


@dataclass(frozen=True)
class NaiveBayesModel:
    log_prior_odds: float
    mu0: np.ndarray
    mu1: np.ndarray
    var0: np.ndarray
    var1: np.ndarray
    pooled: bool = False

    @property
    def p(self) -> int:
        return self.mu0.size

    def feature_terms(self, X) -> np.ndarray:
        """Per-feature marginal log density ratios, shape (n, p)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.p:
            raise ModelError(f"expected {self.p} columns, got {X.shape[1]}")
        l1 = -0.5 * np.log(2 * np.pi * self.var1) - (X - self.mu1) ** 2 / (2 * self.var1)
        l0 = -0.5 * np.log(2 * np.pi * self.var0) - (X - self.mu0) ** 2 / (2 * self.var0)
        return l1 - l0

    def decision_function(self, X) -> np.ndarray:
        return self.log_prior_odds + self.feature_terms(X).sum(axis=1)

    def predict(self, X) -> PredictionResult:
        return PredictionResult(self.decision_function(X))


def fit_naive_bayes(ds: Dataset, pooled: bool = False) -> NaiveBayesModel:
    """Gaussian Naive Bayes with per-class ML means and variances.

    With ``pooled=True`` both classes share the pooled within-class variance,
    which makes each marginal term affine in x.
    """
    X, y = ds.features, _check_binary(ds.labels)
    X0, X1 = X[y == 0], X[y == 1]
    mu0, mu1 = X0.mean(axis=0), X1.mean(axis=0)
    if pooled:
        ss = ((X0 - mu0) ** 2).sum(axis=0) + ((X1 - mu1) ** 2).sum(axis=0)
        var0 = var1 = np.maximum(ss / ds.n, VARIANCE_FLOOR)
    else:
        var0 = np.maximum(X0.var(axis=0), VARIANCE_FLOOR)
        var1 = np.maximum(X1.var(axis=0), VARIANCE_FLOOR)
    return NaiveBayesModel(
        log_prior_odds=estimate_prior_odds(y).log_r_hat,
        mu0=mu0, mu1=mu1, var0=var0, var1=var1, pooled=pooled,
    )


def predict_naive_bayes(model: NaiveBayesModel, X_new) -> PredictionResult:
    return model.predict(X_new)


# --------------------------------------------------------------------------
# Smart Bayes


@dataclass(frozen=True)
class SmartBayesModel:
    ratio_models: tuple[MarginalRatioModel, ...]
    logistic: LogisticModel
    frozen: bool = False
    active: tuple[int, ...] = field(default=())

    @property
    def p(self) -> int:
        return len(self.ratio_models)

    def generative_features(self, X) -> np.ndarray:
        """The z design: log-ratio columns of the non-constant features."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.p:
            raise ModelError(f"expected {self.p} columns, got {X.shape[1]}")
        cols = [eval_log_ratio(self.ratio_models[k], X[:, k]) for k in self.active]
        return np.column_stack(cols) if cols else np.empty((X.shape[0], 0))

    def decision_function(self, X) -> np.ndarray:
        return self.logistic.decision_function(self.generative_features(X))

    def predict(self, X) -> PredictionResult:
        return PredictionResult(self.decision_function(X))

    @property
    def degraded(self) -> bool:
        return not self.logistic.converged and not self.frozen


def fit_smart_bayes(
    ds: Dataset, opts: FitOptions | None = None, frozen: bool = False,
    kind: RatioKind = RatioKind.SPLINE,
) -> SmartBayesModel:
    """Fit per-feature log-ratio models, then the logistic layer on them.

    Raises
    ------
    NoInformativeFeatures
        If every ratio model is constant.
    """
    X, y = ds.features, _check_binary(ds.labels)
    models = tuple(
        fit_marginal_ratio(X[:, k], y, opts, kind=kind, feature_index=k) for k in range(ds.p)
    )
    active = tuple(k for k, m in enumerate(models) if m.kind is not RatioKind.CONSTANT)
    if not active:
        raise NoInformativeFeatures("no informative features")
    if frozen:
        logistic = LogisticModel(
            intercept=estimate_prior_odds(y).log_r_hat, coefficients=np.ones(len(active)),
        )
        return SmartBayesModel(models, logistic, frozen=True, active=active)
    shell = SmartBayesModel(models, LogisticModel(0.0, np.zeros(len(active))), active=active)
    Z = shell.generative_features(X)
    return SmartBayesModel(models, fit_logistic(Z, y), frozen=False, active=active)


def predict_smart_bayes(model: SmartBayesModel, X_new) -> PredictionResult:
    return model.predict(X_new)


@dataclass(frozen=True)
class PriorOnlyModel:
    """Fallback predicting from the prior odds alone."""

    log_prior_odds: float
    p: int

    def decision_function(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.full(X.shape[0], self.log_prior_odds)

    def predict(self, X) -> PredictionResult:
        return PredictionResult(self.decision_function(X))


# --------------------------------------------------------------------------
# persistence


def _num(v) -> str:
    return repr(float(v))


def _nums(a) -> list[str]:
    return [repr(float(v)) for v in np.asarray(a, dtype=float).ravel()]


def _arr(a) -> np.ndarray:
    return np.array([float(v) for v in a], dtype=float)


def _logistic_block(m: LogisticModel) -> dict:
    return {
        "intercept": _num(m.intercept),
        "coefficients": _nums(m.coefficients),
        "converged": m.converged,
        "iterations": m.iterations,
        "aliased": list(m.aliased),
        "separated": m.separated,
    }


def _logistic_from(b: dict) -> LogisticModel:
    return LogisticModel(
        intercept=float(b["intercept"]), coefficients=_arr(b["coefficients"]),
        converged=bool(b["converged"]), iterations=int(b["iterations"]),
        aliased=tuple(b["aliased"]), separated=bool(b["separated"]),
    )


def _ratio_block(m: MarginalRatioModel) -> dict:
    out: dict = {"kind": m.kind.value, "feature_index": m.feature_index}
    if m.spline_fit is not None:
        f = m.spline_fit
        out["spline"] = {
            "interior_knots": _nums(f.basis.interior_knots),
            "lo": _num(f.basis.lo), "hi": _num(f.basis.hi), "degree": f.basis.degree,
            "penalty_scale": _num(f.basis.penalty_scale),
            "coefficients": _nums(f.coefficients), "lambda": _num(f.lam),
            "edf": _num(f.edf), "deviance": _num(f.deviance), "converged": f.converged,
            "iterations": f.iterations, "score_norm": _num(f.score_norm), "n": f.n,
        }
    if m.gaussian is not None:
        g = m.gaussian
        out["gaussian"] = {"mu0": _num(g.mu0), "mu1": _num(g.mu1), "sigma2": _num(g.sigma2)}
    return out


def _ratio_from(b: dict, prior: PriorOdds) -> MarginalRatioModel:
    fit = gauss = None
    if "spline" in b:
        s = b["spline"]
        basis = SplineBasis(
            _arr(s["interior_knots"]), float(s["lo"]), float(s["hi"]), int(s["degree"]), float(s["penalty_scale"]),
        )
        fit = PenalizedSplineFit(
            basis=basis, coefficients=_arr(s["coefficients"]), lam=float(s["lambda"]),
            edf=float(s["edf"]), deviance=float(s["deviance"]), converged=bool(s["converged"]),
            iterations=int(s["iterations"]), score_norm=float(s["score_norm"]), n=int(s["n"]),
        )
    if "gaussian" in b:
        g = b["gaussian"]
        gauss = GaussianParams(float(g["mu0"]), float(g["mu1"]), float(g["sigma2"]))
    return MarginalRatioModel(RatioKind(b["kind"]), prior, int(b["feature_index"]), fit, gauss)


def model_to_dict(model, columns=None) -> dict:
    doc: dict = {"schema_version": SCHEMA_VERSION}
    if columns is not None:
        doc["columns"] = list(columns)
    if isinstance(model, LogisticModel):
        doc["kind"] = "lr"
        doc["logistic"] = _logistic_block(model)
    elif isinstance(model, NaiveBayesModel):
        doc["kind"] = "nb"
        doc["naive_bayes"] = {
            "log_prior_odds": _num(model.log_prior_odds), "pooled": model.pooled,
            "mu0": _nums(model.mu0), "mu1": _nums(model.mu1),
            "var0": _nums(model.var0), "var1": _nums(model.var1),
        }
    elif isinstance(model, SmartBayesModel):
        prior = model.ratio_models[0].prior_odds
        doc["kind"] = "sb"
        doc["frozen"] = model.frozen
        doc["active"] = list(model.active)
        doc["prior_odds"] = {"n1": prior.n1, "n0": prior.n0}
        doc["ratios"] = [_ratio_block(m) for m in model.ratio_models]
        doc["logistic"] = _logistic_block(model.logistic)
        # exp(alpha_k): multiplicative change in the odds per unit of z_k
        doc["odds_ratio_per_unit_z"] = _nums(np.exp(model.logistic.coefficients))
    else:
        raise TypeError(f"cannot serialise {type(model).__name__}")
    return doc


def model_from_dict(doc: dict):
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ModelError(f"unsupported model schema version {version!r} (expected {SCHEMA_VERSION})")
    try:
        kind = doc["kind"]
        if kind == "lr":
            return _logistic_from(doc["logistic"])
        if kind == "nb":
            b = doc["naive_bayes"]
            return NaiveBayesModel(
                float(b["log_prior_odds"]), _arr(b["mu0"]), _arr(b["mu1"]),
                _arr(b["var0"]), _arr(b["var1"]), bool(b["pooled"]),
            )
        if kind == "sb":
            prior = PriorOdds(int(doc["prior_odds"]["n1"]), int(doc["prior_odds"]["n0"]))
            ratios = tuple(_ratio_from(b, prior) for b in doc["ratios"])
            return SmartBayesModel(
                ratios, _logistic_from(doc["logistic"]), bool(doc["frozen"]), tuple(doc["active"]),
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"malformed model document: {exc}") from exc
    raise ModelError(f"unknown model kind {kind!r}")


def save_model(model, path, columns=None) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model, columns), indent=1) + "\n", encoding="utf-8")


def read_model_file(path):
    """Load a model file; returns ``(model, columns)``."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelError(f"malformed model file {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelError(f"malformed model file {path}")
    return model_from_dict(doc), doc.get("columns")


def load_model(path):
    return read_model_file(path)[0]


# --------------------------------------------------------------------------
# uniform entry points used by the harnesses


def fit_classifier(name: str, ds: Dataset, opts: FitOptions | None = None):
    """Fit one of ``nb``, ``lr``, ``sb`` on a dataset."""
    if name == "nb":
        return fit_naive_bayes(ds)
    if name == "lr":
        return fit_logistic(ds.features, ds.labels)
    if name == "sb":
        return fit_smart_bayes(ds, opts)
    raise ValueError(f"unknown classifier {name!r}")
