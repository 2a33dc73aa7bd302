"""Input validation, seeding and worker helpers shared by the estimators."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np
from sklearn.utils.validation import check_array, check_is_fitted

T = TypeVar("T")
R = TypeVar("R")


class RankDeficientError(ValueError):
    """Design matrix does not have full column rank."""


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap."""


def independent_columns(X: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Greedy left-to-right selection of linearly independent columns.

    A column is kept when its component orthogonal to the columns already
    kept has norm above ``rtol`` times the largest column norm (two
    Gram-Schmidt passes). For standardized columns that is the same as
    relative to the column's own norm.
    """
    n, k = X.shape
    scale = float(np.max(np.linalg.norm(X, axis=0))) if k else 0.0
    Q = np.empty((n, min(n, k)))
    m = 0
    keep = np.zeros(k, dtype=bool)
    for j in range(k):
        x = X[:, j]
        norm = np.linalg.norm(x)
        if norm == 0 or m == Q.shape[1]:
            continue
        B = Q[:, :m]
        r = x - B @ (B.T @ x)
        r = r - B @ (B.T @ r)
        rn = np.linalg.norm(r)
        if rn > rtol * scale:
            keep[j] = True
            Q[:, m] = r / rn
            m += 1
    return keep


def check_X(estimator, X, *, reset: bool) -> np.ndarray:
    """Validate ``X`` and record or compare its column layout.

    On ``reset`` the number of columns (and column names, if ``X`` is a
    DataFrame) is stored on the estimator; otherwise a mismatch raises.
    """
    names = None
    if hasattr(X, "columns"):
        names = np.asarray([str(c) for c in X.columns], dtype=object)
    X = check_array(X, dtype=np.float64, ensure_2d=True, ensure_all_finite=True)
    if reset:
        estimator.n_features_in_ = X.shape[1]
        if names is not None:
            estimator.feature_names_in_ = names
        elif hasattr(estimator, "feature_names_in_"):
            del estimator.feature_names_in_
        return X
    check_is_fitted(estimator)
    if X.shape[1] != estimator.n_features_in_:
        raise ValueError(
            f"X has {X.shape[1]} columns but {type(estimator).__name__} was "
            f"fitted with {estimator.n_features_in_}"
        )
    fitted_names = getattr(estimator, "feature_names_in_", None)
    if names is not None and fitted_names is not None:
        if list(names) != list(fitted_names):
            raise ValueError("column names differ from the training layout")
    return X


def check_target(y, n: int, *, binary: bool = False) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.shape[0] != n:
        raise ValueError(f"y has {y.shape[0]} entries, expected {n}")
    if not np.all(np.isfinite(y)):
        raise ValueError("y contains non-finite values")
    if binary:
        labels = np.unique(y)
        if not np.all(np.isin(labels, (0.0, 1.0))):
            raise ValueError("classification target must be coded 0/1")
        if labels.size < 2:
            raise ValueError("classification target has a single class")
    return y


def seed_sequence(random_state, *keys: int) -> np.random.SeedSequence:
    """Child seed sequence for task ``keys`` under a root ``random_state``.

    Derivation depends only on the root and the task indices, so results do
    not depend on the order in which tasks execute.
    """
    if isinstance(random_state, np.random.SeedSequence):
        root = random_state
    else:
        root = np.random.SeedSequence(random_state)
    return np.random.SeedSequence(root.entropy, spawn_key=root.spawn_key + tuple(keys))


def child_rng(random_state, *keys: int) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(random_state, *keys))


def child_seed(random_state, *keys: int) -> int:
    """A 31-bit integer seed, for components that take a plain int."""
    return int(seed_sequence(random_state, *keys).generate_state(1)[0] >> 1)


def resolve_threads(n_threads: int | None) -> int:
    if n_threads is None or n_threads <= 0:
        return os.cpu_count() or 1
    return int(n_threads)


def parallel_map(fn: Callable[[T], R], items: Sequence[T] | Iterable[T],
                 n_threads: int | None = 1) -> list[R]:
    """Ordered map over ``items``; threads only change wall time, not results."""
    items = list(items)
    n = min(resolve_threads(n_threads), len(items))
    if n <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
