"""Two-stage censorship-aware estimator.

A classifier estimates P(sales == 0 | X). For a threshold ``alpha``, training
rows with probability above ``alpha`` are set aside and the family's
regressor is trained on the rest. A prediction is zero when the row's
probability exceeds ``alpha`` or the regressor output is negative, and the
regressor output otherwise. ``alpha`` is chosen on validation RMSE.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_target, check_X, child_seed, parallel_map
from .datamodel import DesignMatrix
from .learners import ConstantProbabilityClassifier, make_learner, select_mtry
from .learners._cv import TIE_TOL, argmin_prefer

DEFAULT_ALPHA_GRID = tuple(round(0.05 * i, 2) for i in range(1, 20)) + (1.0,)
MIN_ROWS_PER_COLUMN = 2

# seed slots under a model's root seed
_CLASSIFIER_SLOT = 0
_REGRESSOR_SLOT = 1


class NoFeasibleAlphaError(ValueError):
    """Every threshold left too few training rows for the regressor."""


def classify_rows(classifier, X, alpha: float) -> np.ndarray:
    """1 where the predicted censoring probability is strictly above ``alpha``."""
    p = classifier.predict_proba(X)[:, 1]
    return (p > alpha).astype(np.int64)


def combine(probability: np.ndarray, regression: np.ndarray, alpha: float) -> np.ndarray:
    """Zero for flagged rows or negative regression output; regression output otherwise."""
    out = np.where((probability > alpha) | (regression < 0), 0.0, regression)
    return out + 0.0  # normalizes -0.0


def _check_alpha_grid(alpha_grid) -> np.ndarray:
    grid = np.unique(np.asarray(alpha_grid, dtype=np.float64).ravel())
    if grid.size == 0:
        raise ValueError("alpha_grid is empty")
    if np.any((grid < 0) | (grid > 1)) or not np.all(np.isfinite(grid)):
        raise ValueError("alpha_grid values must lie in [0, 1]")
    return grid


@dataclass(frozen=True)
class CensoredModel:
    """A fitted classifier/regressor pair with its threshold.

    ``censored=False`` marks the baseline that treats every row as
    uncensored (constant zero probability, ``alpha = 0``).
    """

    family: str
    classifier: Any
    regressor: Any
    alpha: float
    alpha_profile: tuple[tuple[float, float], ...] = ()
    skipped_alphas: tuple[float, ...] = ()
    censored: bool = True
    regressor_rows: int = 0
    info: Mapping[str, Any] = field(default_factory=dict)

    def censor_probability(self, X) -> np.ndarray:
        return self.classifier.predict_proba(X)[:, 1]

    def predict(self, X) -> np.ndarray:
        return combine(self.censor_probability(X), self.regressor.predict(X), self.alpha)

    @property
    def n_features_in_(self) -> int:
        return self.regressor.n_features_in_


def predict_censored(model: CensoredModel, X) -> np.ndarray:
    return model.predict(X)


def _resolve_params(family, X, y, params, random_state):
    """Fix data-dependent choices once so every threshold shares them."""
    params = dict(params or {})
    # row subsets of a full-rank design can lose rank (e.g. a level seen only in
    # flagged rows); such columns get a zero coefficient
    params.setdefault("collinear", "drop")
    info = {}
    if family == "random_forest" and params.get("mtry", "cv") == "cv":
        probe = make_learner(family, "regression", **params,
                             random_state=child_seed(random_state, _REGRESSOR_SLOT))
        mtry, profile = select_mtry(X, y, probe)
        params["mtry"] = int(mtry)
        info["mtry_profile"] = {int(k): float(v) for k, v in profile.items()}
    return params, info


def _fit_regressor(family, params, X, y, random_state):
    reg = make_learner(family, "regression", **params,
                       random_state=child_seed(random_state, _REGRESSOR_SLOT))
    return reg.fit(X, y)


def fit_censored(train: DesignMatrix, validation: DesignMatrix, family: str,
                 alpha_grid: Sequence[float] | None = None,
                 learner_params: Mapping[str, Any] | None = None,
                 random_state=0, n_threads: int | None = 1) -> CensoredModel:
    """Fit the classifier once, then a regressor per threshold; keep the best on validation RMSE."""
    return _fit_censored_arrays(train.X, train.y, validation.X, validation.y, family,
                                alpha_grid, learner_params, random_state, n_threads)


def _fit_censored_arrays(X, y, X_val, y_val, family, alpha_grid, learner_params,
                         random_state, n_threads):
    grid = _check_alpha_grid(DEFAULT_ALPHA_GRID if alpha_grid is None else alpha_grid)
    d = (y == 0).astype(np.float64)
    check_target(d, X.shape[0], binary=True)
    params = dict(learner_params or {})
    clf = make_learner(family, "classification", **params,
                       random_state=child_seed(random_state, _CLASSIFIER_SLOT)).fit(X, d)
    p_train = clf.predict_proba(X)[:, 1]
    p_val = clf.predict_proba(X_val)[:, 1]
    params, info = _resolve_params(family, X, y, params, random_state)

    k = X.shape[1]
    min_rows = MIN_ROWS_PER_COLUMN * k
    tasks, skipped, seen, mask_of = [], [], {}, []
    for a in grid:
        keep = p_train <= a
        if keep.sum() < min_rows:
            warnings.warn(f"alpha={a:g} keeps {int(keep.sum())} training rows "
                          f"(< {min_rows}); skipped", stacklevel=3)
            skipped.append(float(a))
            continue
        key = keep.tobytes()
        if key not in seen:
            seen[key] = len(seen)
            tasks.append(keep)
        mask_of.append(seen[key])
    if not tasks:
        raise NoFeasibleAlphaError(
            f"no alpha in the grid leaves at least {min_rows} uncensored training rows")
    alphas = [a for a in grid if float(a) not in skipped]

    # Threshold values that select the same rows share one regressor fit. Models
    # are fitted in batches and only those still within the tie tolerance of the
    # running minimum are kept, which bounds memory for large forests.
    rmse_by_mask: dict[int, list[float]] = {}
    kept_models: dict[int, Any] = {}
    best_so_far = np.inf
    batch = max(1, int(n_threads or 1))
    for start in range(0, len(tasks), batch):
        ids = list(range(start, min(start + batch, len(tasks))))

        def run(i):
            reg = _fit_regressor(family, params, X[tasks[i]], y[tasks[i]], random_state)
            return reg, reg.predict(X_val)

        for i, (reg, reg_val) in zip(ids, parallel_map(run, ids, n_threads)):
            scores = [float(np.sqrt(np.mean((combine(p_val, reg_val, a) - y_val) ** 2)))
                      for a, m in zip(alphas, mask_of) if m == i]
            rmse_by_mask[i] = scores
            best_so_far = min(best_so_far, min(scores))
            kept_models[i] = reg
        kept_models = {i: m for i, m in kept_models.items()
                       if min(rmse_by_mask[i]) <= best_so_far + TIE_TOL}

    cursor = {i: 0 for i in rmse_by_mask}
    profile = []
    for a, m in zip(alphas, mask_of):
        profile.append((float(a), rmse_by_mask[m][cursor[m]]))
        cursor[m] += 1
    best = argmin_prefer([r for _, r in profile], [a for a, _ in profile])
    best_alpha = profile[best][0]
    best_mask = mask_of[best]
    return CensoredModel(
        family=family, classifier=clf, regressor=kept_models[best_mask], alpha=best_alpha,
        alpha_profile=tuple(profile), skipped_alphas=tuple(skipped), censored=True,
        regressor_rows=int(tasks[best_mask].sum()), info=info,
    )


def fit_uncensored(train: DesignMatrix, family: str,
                   learner_params: Mapping[str, Any] | None = None,
                   random_state=0) -> CensoredModel:
    """Baseline that treats every row as uncensored; negative outputs still clamp to zero."""
    return _fit_uncensored_arrays(train.X, train.y, family, learner_params, random_state)


def _fit_uncensored_arrays(X, y, family, learner_params, random_state):
    params, info = _resolve_params(family, X, y, learner_params, random_state)
    clf = ConstantProbabilityClassifier(0.0).fit(X)
    reg = _fit_regressor(family, params, X, y, random_state)
    return CensoredModel(family=family, classifier=clf, regressor=reg, alpha=0.0,
                         censored=False, regressor_rows=int(X.shape[0]), info=info)


class CensoredRegressor(RegressorMixin, BaseEstimator):
    """Estimator wrapper around :func:`fit_censored` / :func:`fit_uncensored`.

    Parameters
    ----------
    family : {"ols", "ridge", "lasso", "random_forest"}
    censored : bool, default=True
        False fits the uncensored baseline (no validation data needed).
    alpha_grid : sequence of float, optional
        Thresholds searched; defaults to 0.05, 0.10, ..., 0.95, 1.0.
    learner_params : dict, optional
        Hyperparameters shared by the family's classifier and regressor.
    """

    def __init__(self, family="ols", censored=True, alpha_grid=None, learner_params=None,
                 n_threads=1, random_state=None):
        self.family = family
        self.censored = censored
        self.alpha_grid = alpha_grid
        self.learner_params = learner_params
        self.n_threads = n_threads
        self.random_state = random_state

    def fit(self, X, y, X_val=None, y_val=None):
        X = check_X(self, X, reset=True)
        y = check_target(y, X.shape[0])
        if self.censored:
            if X_val is None or y_val is None:
                raise ValueError("the censored estimator needs validation data (X_val, y_val)")
            X_val = check_X(self, X_val, reset=False)
            y_val = check_target(y_val, X_val.shape[0])
            self.model_ = _fit_censored_arrays(X, y, X_val, y_val, self.family, self.alpha_grid,
                                               self.learner_params, self.random_state,
                                               self.n_threads)
        else:
            self.model_ = _fit_uncensored_arrays(X, y, self.family, self.learner_params,
                                                 self.random_state)
        self.alpha_ = self.model_.alpha
        self.alpha_profile_ = self.model_.alpha_profile
        self.classifier_ = self.model_.classifier
        self.regressor_ = self.model_.regressor
        return self

    def predict(self, X):
        check_is_fitted(self)
        X = check_X(self, X, reset=False)
        return self.model_.predict(X)
