"""Random forests built from the numba CART kernels."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin

from .._validation import check_target, check_X, child_rng, child_seed, parallel_map
from ._cv import argmin_prefer, fold_ids
from .tree import apply_forest, build_tree, encode_columns


def mtry_candidates(k: int) -> list[int]:
    """Geometric sequence k, k/2, k/4, ... (floored, >= 1), ascending."""
    out, m = set(), float(k)
    while m >= 1:
        out.add(int(m))
        m /= 2
    return sorted(out)


class _BaseForest(BaseEstimator):
    _vote = False

    def __init__(self, n_trees=50, mtry="cv", nodesize=5, cv_folds=5,
                 n_threads=1, random_state=None):
        self.n_trees = n_trees
        self.mtry = mtry
        self.nodesize = nodesize
        self.cv_folds = cv_folds
        self.n_threads = n_threads
        self.random_state = random_state

    def _check_params(self, n, k):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.nodesize < 1:
            raise ValueError("nodesize must be >= 1")
        if n < 2 * self.nodesize:
            raise ValueError(f"need at least 2*nodesize={2 * self.nodesize} rows, got {n}")
        if self.mtry != "cv":
            mtry = int(self.mtry)
            if not 1 <= mtry <= k:
                raise ValueError(f"mtry={mtry} outside [1, {k}]")

    def _grow(self, X, y, mtry):
        n = X.shape[0]
        codes, uniq, offsets = encode_columns(X)

        def one(t):
            rng = child_rng(self.random_state, t)
            idx = rng.integers(0, n, size=n).astype(np.int64)
            in_bag = np.bincount(idx, minlength=n) > 0
            arrays = build_tree(codes, uniq, offsets, y, idx, mtry, self.nodesize,
                                child_seed(self.random_state, t, 1))
            return arrays, in_bag

        grown = parallel_map(one, range(self.n_trees), self.n_threads)
        sizes = np.array([g[0][0].size for g in grown], dtype=np.int64)
        self.tree_offsets_ = np.concatenate([[0], np.cumsum(sizes)])
        for name, pos in (("feature_", 0), ("threshold_", 1), ("left_", 2), ("right_", 3),
                          ("value_", 4), ("node_count_", 5)):
            setattr(self, name, np.concatenate([g[0][pos] for g in grown]))
        in_bag = np.stack([g[1] for g in grown], axis=1)

        per_tree = self._apply(X)
        oob = ~in_bag
        n_oob = oob.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            self.oob_prediction_ = np.where(n_oob > 0, (per_tree * oob).sum(axis=1) / n_oob, np.nan)
        self.in_bag_prediction_ = np.where(
            in_bag.sum(axis=1) > 0,
            (per_tree * in_bag).sum(axis=1) / np.maximum(in_bag.sum(axis=1), 1), np.nan)
        self.mtry_ = int(mtry)

    def _apply(self, X):
        return apply_forest(X, self.feature_, self.threshold_, self.left_, self.right_,
                            self.value_, self.tree_offsets_, self._vote)

    def _fit(self, X, y):
        n, k = X.shape
        self._check_params(n, k)
        if self.mtry == "cv":
            mtry, self.mtry_profile_ = select_mtry(X, y, self)
        else:
            mtry = int(self.mtry)
        self._grow(X, y, mtry)
        return self

    def _mean(self, X):
        X = check_X(self, X, reset=False)
        return self._apply(X).mean(axis=1)


class RandomForestRegressor(RegressorMixin, _BaseForest):
    """Bagged regression trees with per-node column subsampling.

    Parameters
    ----------
    n_trees : int, default=50
    mtry : int or "cv", default="cv"
        Columns tried at each node; "cv" picks it by K-fold CV over
        ``k, k/2, k/4, ...``.
    nodesize : int, default=5
        Nodes with this many rows or fewer are not split.
    """

    def fit(self, X, y):
        X = check_X(self, X, reset=True)
        y = check_target(y, X.shape[0])
        self._fit(X, y)
        ok = ~np.isnan(self.oob_prediction_)
        self.oob_rmse_ = float(np.sqrt(np.mean((self.oob_prediction_[ok] - y[ok]) ** 2)))
        return self

    def predict(self, X):
        return self._mean(X)


class RandomForestClassifier(ClassifierMixin, _BaseForest):
    """Classification forest; probability is the share of trees voting for class 1."""

    _vote = True

    def fit(self, X, y):
        X = check_X(self, X, reset=True)
        d = check_target(y, X.shape[0], binary=True)
        self.classes_ = np.array([0, 1])
        return self._fit(X, d)

    def predict_proba(self, X):
        p = self._mean(X)
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] > 0.5).astype(np.int64)


def select_mtry(X, y, forest, candidates=None):
    """K-fold CV choice of ``mtry``; returns (mtry, {candidate: cv score}).

    Scores are mean fold RMSE (of probabilities, for classifiers); ties go to
    the smaller candidate.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, k = X.shape
    candidates = mtry_candidates(k) if candidates is None else sorted(set(int(c) for c in candidates))
    if not candidates:
        raise ValueError("empty mtry candidate set")
    if len(candidates) == 1:
        return candidates[0], {candidates[0]: float("nan")}
    folds = fold_ids(n, forest.cv_folds, forest.random_state)
    scores = np.zeros((forest.cv_folds, len(candidates)))
    for f in range(forest.cv_folds):
        tr, te = folds != f, folds == f
        for j, m in enumerate(candidates):
            sub = type(forest)(**{**forest.get_params(), "mtry": m})
            sub.fit(X[tr], y[tr])
            pred = sub._mean(X[te])
            scores[f, j] = np.sqrt(np.mean((pred - y[te]) ** 2))
    mean = scores.mean(axis=0)
    best = argmin_prefer(mean, candidates)
    return candidates[best], {int(c): float(s) for c, s in zip(candidates, mean)}
