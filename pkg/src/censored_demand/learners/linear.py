"""Least-squares regressors: OLS, ridge and lasso with internal CV over the penalty."""
from __future__ import annotations

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator, RegressorMixin

from .._validation import (
    ConvergenceError,
    RankDeficientError,
    check_target,
    check_X,
    independent_columns,
)
from ._cd import cd_quadratic_l1
from ._cv import argmin_prefer, check_grid, fold_ids, log_grid

RANK_RTOL = 1e-10


def _center(X, y, fit_intercept):
    if fit_intercept:
        x_mean = X.mean(axis=0)
        y_mean = float(y.mean())
        return X - x_mean, y - y_mean, x_mean, y_mean
    return X, y, np.zeros(X.shape[1]), 0.0


def _rmse(a, b) -> float:
    return float(np.sqrt(np.mean((a - b) ** 2)))


def lstsq_qr(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Least squares through a column-pivoted QR; raises on rank deficiency."""
    n, k = X.shape
    if n < k:
        raise RankDeficientError(f"{n} rows cannot identify {k} coefficients")
    Q, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if k and (diag[0] == 0 or diag[-1] <= RANK_RTOL * diag[0]):
        rank = int(np.sum(diag > RANK_RTOL * diag[0])) if diag[0] > 0 else 0
        raise RankDeficientError(
            f"design has rank {rank} < {k} columns; rebuild it with the "
            "collinear columns dropped (see datamodel.build_design)"
        )
    beta = np.empty(k)
    beta[piv] = scipy.linalg.solve_triangular(R, Q.T @ y)
    return beta


class OLSRegressor(RegressorMixin, BaseEstimator):
    """Ordinary least squares with an unpenalized intercept.

    Parameters
    ----------
    fit_intercept : bool, default=True
    collinear : {"raise", "drop"}, default="raise"
        With "drop", columns that are constant or linearly dependent on
        earlier columns over the training rows get coefficient 0 (listed in
        ``dropped_columns_``) instead of raising :class:`RankDeficientError`.
        Useful when fitting on row subsets of a full-rank design.
    """

    def __init__(self, fit_intercept=True, collinear="raise"):
        self.fit_intercept = fit_intercept
        self.collinear = collinear

    def fit(self, X, y):
        if self.collinear not in ("raise", "drop"):
            raise ValueError(f"collinear must be 'raise' or 'drop', got {self.collinear!r}")
        X = check_X(self, X, reset=True)
        y = check_target(y, X.shape[0])
        Xc, yc, x_mean, y_mean = _center(X, y, self.fit_intercept)
        self.coef_ = np.zeros(X.shape[1])
        if self.collinear == "drop":
            keep = independent_columns(Xc)
            self.coef_[keep] = lstsq_qr(Xc[:, keep], yc)
            self.dropped_columns_ = np.flatnonzero(~keep)
        else:
            self.coef_[:] = lstsq_qr(Xc, yc)
            self.dropped_columns_ = np.zeros(0, dtype=np.int64)
        self.intercept_ = float(y_mean - x_mean @ self.coef_)
        return self

    def predict(self, X):
        X = check_X(self, X, reset=False)
        return X @ self.coef_ + self.intercept_


class RidgeRegressor(RegressorMixin, BaseEstimator):
    """Ridge regression, ``||y - Xb||^2 + lam ||b||^2`` with the penalty chosen by K-fold CV.

    With ``lambdas=None`` the grid is ``n_lambdas`` log-spaced values from
    ``1000 * max_j |x_j' y|`` (centered data) down by ``lambda_ratio``; this is
    the usual elastic-net path start for a ridge penalty rescaled to the
    unnormalized objective. A one-point grid skips CV.
    """

    def __init__(self, lambdas=None, n_lambdas=100, lambda_ratio=1e-4, n_folds=10,
                 fit_intercept=True, random_state=None):
        self.lambdas = lambdas
        self.n_lambdas = n_lambdas
        self.lambda_ratio = lambda_ratio
        self.n_folds = n_folds
        self.fit_intercept = fit_intercept
        self.random_state = random_state

    @staticmethod
    def _path(Xc, yc, lambdas):
        # eigen-decomposition of X'X gives every grid point from one factorization
        evals, V = np.linalg.eigh(Xc.T @ Xc)
        evals = np.maximum(evals, 0.0)
        vty = V.T @ (Xc.T @ yc)
        return (vty[None, :] / (evals[None, :] + lambdas[:, None])) @ V.T  # (L, k)

    def fit(self, X, y):
        X = check_X(self, X, reset=True)
        y = check_target(y, X.shape[0])
        Xc, yc, x_mean, y_mean = _center(X, y, self.fit_intercept)
        if self.lambdas is None:
            lam_max = 1000.0 * float(np.max(np.abs(Xc.T @ yc))) if X.shape[1] else 1.0
            lambdas = log_grid(lam_max, self.n_lambdas, self.lambda_ratio)
        else:
            lambdas = check_grid(self.lambdas)
        path = self._path(Xc, yc, lambdas)

        if lambdas.size > 1:
            folds = fold_ids(X.shape[0], self.n_folds, self.random_state)
            scores = np.zeros((self.n_folds, lambdas.size))
            for f in range(self.n_folds):
                tr, te = folds != f, folds == f
                Xtr, ytr, xm, ym = _center(X[tr], y[tr], self.fit_intercept)
                coefs = self._path(Xtr, ytr, lambdas)
                pred = (X[te] - xm) @ coefs.T + ym
                scores[f] = np.sqrt(np.mean((pred - y[te, None]) ** 2, axis=0))
            self.cv_rmse_ = scores.mean(axis=0)
            best = argmin_prefer(self.cv_rmse_, lambdas)
        else:
            self.cv_rmse_ = np.full(1, np.nan)
            best = 0

        self.lambdas_ = lambdas
        self.coef_path_ = path
        self.lambda_ = float(lambdas[best])
        self.coef_ = path[best].copy()
        self.intercept_ = float(y_mean - x_mean @ self.coef_)
        return self

    def predict(self, X):
        X = check_X(self, X, reset=False)
        return X @ self.coef_ + self.intercept_


def lasso_path(Xc, yc, lambdas, tol=1e-7, max_sweeps=10000, coef_init=None):
    """Coordinate-descent solutions of ``(1/2n)||y - Xb||^2 + lam ||b||_1``.

    ``Xc`` and ``yc`` must already be centered when an intercept is wanted.
    Solutions are warm-started down the (decreasing) grid.
    """
    n, k = Xc.shape
    G = Xc.T @ Xc / n
    c = Xc.T @ yc / n
    beta = np.zeros(k) if coef_init is None else np.array(coef_init, dtype=np.float64)
    path = np.empty((lambdas.size, k))
    for i, lam in enumerate(lambdas):
        penalty = np.full(k, lam)
        sweeps, ok, delta = cd_quadratic_l1(G, c, penalty, beta, tol, max_sweeps)
        if not ok:
            raise ConvergenceError(
                f"lasso coordinate descent did not converge at lambda[{i}]={lam:.6g} "
                f"after {sweeps} sweeps (last max change {delta:.3g}, tol {tol:g})"
            )
        path[i] = beta
    return path


class LassoRegressor(RegressorMixin, BaseEstimator):
    """L1-penalized least squares by cyclic coordinate descent, penalty chosen by K-fold CV.

    The default grid runs from ``lambda_max = max_j |x_j' y| / n`` (the
    smallest penalty giving an all-zero solution) down by ``lambda_ratio``.
    """

    def __init__(self, lambdas=None, n_lambdas=100, lambda_ratio=1e-4, n_folds=10,
                 tol=1e-7, max_sweeps=10000, fit_intercept=True, random_state=None):
        self.lambdas = lambdas
        self.n_lambdas = n_lambdas
        self.lambda_ratio = lambda_ratio
        self.n_folds = n_folds
        self.tol = tol
        self.max_sweeps = max_sweeps
        self.fit_intercept = fit_intercept
        self.random_state = random_state

    def fit(self, X, y):
        X = check_X(self, X, reset=True)
        y = check_target(y, X.shape[0])
        n = X.shape[0]
        Xc, yc, x_mean, y_mean = _center(X, y, self.fit_intercept)
        if self.lambdas is None:
            lam_max = float(np.max(np.abs(Xc.T @ yc))) / n if X.shape[1] else 1.0
            lambdas = log_grid(lam_max, self.n_lambdas, self.lambda_ratio)
        else:
            lambdas = check_grid(self.lambdas)
        path = lasso_path(Xc, yc, lambdas, self.tol, self.max_sweeps)

        if lambdas.size > 1:
            folds = fold_ids(n, self.n_folds, self.random_state)
            scores = np.zeros((self.n_folds, lambdas.size))
            for f in range(self.n_folds):
                tr, te = folds != f, folds == f
                Xtr, ytr, xm, ym = _center(X[tr], y[tr], self.fit_intercept)
                coefs = lasso_path(Xtr, ytr, lambdas, self.tol, self.max_sweeps)
                pred = (X[te] - xm) @ coefs.T + ym
                scores[f] = np.sqrt(np.mean((pred - y[te, None]) ** 2, axis=0))
            self.cv_rmse_ = scores.mean(axis=0)
            best = argmin_prefer(self.cv_rmse_, lambdas)
        else:
            self.cv_rmse_ = np.full(1, np.nan)
            best = 0

        self.lambdas_ = lambdas
        self.coef_path_ = path
        self.lambda_ = float(lambdas[best])
        self.coef_ = path[best].copy()
        self.intercept_ = float(y_mean - x_mean @ self.coef_)
        return self

    def predict(self, X):
        X = check_X(self, X, reset=False)
        return X @ self.coef_ + self.intercept_
