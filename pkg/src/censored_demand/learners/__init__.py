"""The four base families, each as a regressor and a censoring classifier."""
from __future__ import annotations

from typing import Any

import numpy as np

from .forest import RandomForestClassifier, RandomForestRegressor, select_mtry
from .linear import LassoRegressor, OLSRegressor, RidgeRegressor, lasso_path
from .logistic import ConstantProbabilityClassifier, LogisticClassifier

FAMILIES = ("ols", "ridge", "lasso", "random_forest")
TASKS = ("regression", "classification")

_PENALIZED_KEYS = {"lambdas", "n_lambdas", "lambda_ratio", "n_folds", "random_state"}
_FOREST_KEYS = {"n_trees", "mtry", "nodesize", "cv_folds", "n_threads", "random_state"}


def make_learner(family: str, task: str = "regression", **hyperparams: Any):
    """Unfitted estimator for ``family`` and ``task``.

    Hyperparameters a family does not use are ignored, so one settings block
    can be shared by a family's regressor and classifier.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}; expected one of {TASKS}")

    def pick(keys):
        return {k: v for k, v in hyperparams.items() if k in keys}

    if family == "random_forest":
        cls = RandomForestRegressor if task == "regression" else RandomForestClassifier
        return cls(**pick(_FOREST_KEYS))
    if task == "classification":
        penalty = {"ols": None, "ridge": "l2", "lasso": "l1"}[family]
        params = pick(_PENALIZED_KEYS) if penalty else {}
        return LogisticClassifier(penalty=penalty, **params)
    if family == "ols":
        return OLSRegressor(**pick({"collinear"}))
    cls = RidgeRegressor if family == "ridge" else LassoRegressor
    return cls(**pick(_PENALIZED_KEYS))


def learner_family(est) -> str:
    if isinstance(est, (RandomForestRegressor, RandomForestClassifier)):
        return "random_forest"
    if isinstance(est, LogisticClassifier):
        return {None: "ols", "l2": "ridge", "l1": "lasso"}[est.penalty]
    if isinstance(est, RidgeRegressor):
        return "ridge"
    if isinstance(est, LassoRegressor):
        return "lasso"
    return "ols"


def fit_ols(X, y):
    return OLSRegressor().fit(X, y)


def fit_ridge(X, y, lambdas=None, n_folds=10, random_state=None):
    return RidgeRegressor(lambdas=lambdas, n_folds=n_folds, random_state=random_state).fit(X, y)


def fit_lasso(X, y, lambdas=None, n_folds=10, random_state=None):
    return LassoRegressor(lambdas=lambdas, n_folds=n_folds, random_state=random_state).fit(X, y)


def fit_forest(X, y, n_trees=50, mtry="cv", nodesize=5, random_state=None, **kw):
    return RandomForestRegressor(n_trees=n_trees, mtry=mtry, nodesize=nodesize,
                                 random_state=random_state, **kw).fit(X, y)


def fit_classifier(X, d, family: str, **hyperparams):
    return make_learner(family, "classification", **hyperparams).fit(X, d)


def predict(model, X) -> np.ndarray:
    """Regression output, or the class-1 probability for classifiers."""
    if hasattr(model, "predict_proba"):
        return model.predict_proba(X)[:, 1]
    return model.predict(X)


__all__ = [
    "FAMILIES", "TASKS", "make_learner", "learner_family", "predict",
    "fit_ols", "fit_ridge", "fit_lasso", "fit_forest", "fit_classifier", "select_mtry",
    "lasso_path", "OLSRegressor", "RidgeRegressor", "LassoRegressor", "LogisticClassifier",
    "ConstantProbabilityClassifier", "RandomForestRegressor", "RandomForestClassifier",
]
