"""Smart Bayes: logistic regression on estimated marginal log density ratios,
with Naive Bayes and logistic regression baselines."""

from .classify import (
    LogisticModel,
    NaiveBayesModel,
    SmartBayesModel,
    fit_logistic,
    fit_naive_bayes,
    fit_smart_bayes,
    load_model,
    save_model,
)
from .core import Dataset, load_csv, misclassification_rate, preprocess, split
from .ratio import RatioKind, fit_marginal_ratio

__version__ = "0.1.0"

__all__ = [
    "Dataset", "LogisticModel", "NaiveBayesModel", "RatioKind", "SmartBayesModel",
    "fit_logistic", "fit_marginal_ratio", "fit_naive_bayes", "fit_smart_bayes",
    "load_csv", "load_model", "misclassification_rate", "preprocess", "save_model", "split",
]
