"""Logistic classifiers mirroring the regression families.

``penalty=None`` is plain maximum likelihood by IRLS; ``"l2"`` and ``"l1"``
add a ridge or lasso penalty and are solved by proximal Newton steps (the
lasso subproblem by coordinate descent). The penalized objective is
``-loglik / n + lam * P(b)`` with ``P = ||b||^2 / 2`` or ``||b||_1``; the
intercept is never penalized.
"""
from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import ConvergenceWarning

from .._validation import check_target, check_X
from ._cd import cd_quadratic_l1
from ._cv import argmin_prefer, check_grid, fold_ids, log_grid

_EPS = 1e-15


def binomial_deviance(d, p) -> float:
    p = np.clip(p, _EPS, 1.0 - _EPS)
    return float(-2.0 * np.sum(d * np.log(p) + (1.0 - d) * np.log1p(-p)))


def _solve_spd(A, b):
    try:
        return scipy.linalg.cho_solve(scipy.linalg.cho_factor(A, check_finite=False), b,
                                      check_finite=False)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(A, b, rcond=None)[0]


def _irls(Xa, d, tol, max_iter):
    """Unpenalized logistic MLE on an intercept-augmented design."""
    beta = np.zeros(Xa.shape[1])
    ybar = np.clip(d.mean(), 1e-6, 1 - 1e-6)
    beta[0] = np.log(ybar / (1 - ybar))
    dev = binomial_deviance(d, expit(Xa @ beta))
    for it in range(1, max_iter + 1):
        eta = Xa @ beta
        p = expit(eta)
        w = np.maximum(p * (1.0 - p), 1e-10)
        H = (Xa * w[:, None]).T @ Xa
        step = _solve_spd(H, Xa.T @ (d - p))
        t = 1.0
        while True:
            cand = beta + t * step
            new_dev = binomial_deviance(d, expit(Xa @ cand))
            if new_dev <= dev + 1e-12 * abs(dev) or t < 1e-8:
                break
            t *= 0.5
        beta = cand
        converged = abs(dev - new_dev) / (abs(new_dev) + 0.1) < tol
        dev = new_dev
        if converged:
            return beta, it, True
    return beta, max_iter, False


def _weighted_gram(Xa, w):
    """``Xa' diag(w) Xa`` through a symmetric rank-k update."""
    A = Xa * np.sqrt(w)[:, None]
    C = scipy.linalg.blas.dsyrk(1.0, A, trans=1)
    return np.triu(C) + np.triu(C, 1).T


def _penalized_objective(Xa, d, b, pen, l1):
    eta = Xa @ b
    loss = np.sum(np.logaddexp(0.0, eta) - d * eta) / Xa.shape[0]
    if l1:
        return loss + np.sum(pen * np.abs(b))
    return loss + 0.5 * np.sum(pen * b * b)


def _newton_penalized(Xa, d, lam, beta, tol, max_iter, l1):
    """Proximal Newton: minimize the local IRLS quadratic plus penalty, then backtrack.

    The L2 subproblem is a linear solve; the L1 subproblem is solved by
    coordinate descent. Backtracking on the true objective keeps every
    accepted step a descent step.
    """
    n, k1 = Xa.shape
    pen = np.full(k1, lam)
    pen[0] = 0.0
    obj = _penalized_objective(Xa, d, beta, pen, l1)
    for it in range(1, max_iter + 1):
        p = expit(Xa @ beta)
        w = np.maximum(p * (1.0 - p), 1e-6)
        grad = -Xa.T @ (d - p) / n
        H = _weighted_gram(Xa, w) / n
        if l1:
            target = beta.copy()
            cd_quadratic_l1(H, H @ beta - grad, pen, target, tol * 0.1, 10000)
        else:
            H[np.diag_indices_from(H)] += pen + 1e-12
            target = beta - _solve_spd(H, grad + pen * beta)
        step = target - beta
        t = 1.0
        while True:
            cand = beta + t * step
            new_obj = _penalized_objective(Xa, d, cand, pen, l1)
            if new_obj <= obj + 1e-12 * abs(obj) or t < 1e-6:
                break
            t *= 0.5
        change = np.max(np.abs(cand - beta))
        beta, obj = cand, new_obj
        if change < tol:
            return beta, it, True
    return beta, max_iter, False


class LogisticClassifier(ClassifierMixin, BaseEstimator):
    """Binary logistic regression for the censoring indicator.

    Parameters
    ----------
    penalty : {None, "l2", "l1"}
        None gives plain IRLS maximum likelihood; otherwise the penalty
        weight is chosen from a decreasing grid by K-fold CV on held-out
        binomial deviance.
    lambdas : array-like, optional
        Explicit decreasing grid; a single value skips CV.
    tol : float
        IRLS convergence: relative change in deviance.
    path_tol : float
        Penalized fits: largest coefficient change between Newton steps.
    """

    def __init__(self, penalty=None, lambdas=None, n_lambdas=100, lambda_ratio=1e-4,
                 n_folds=10, tol=1e-8, path_tol=1e-6, max_iter=100, random_state=None):
        self.penalty = penalty
        self.path_tol = path_tol
        self.lambdas = lambdas
        self.n_lambdas = n_lambdas
        self.lambda_ratio = lambda_ratio
        self.n_folds = n_folds
        self.tol = tol
        self.max_iter = max_iter
        self.random_state = random_state

    def _path(self, Xc, d, lambdas):
        n = Xc.shape[0]
        Xa = np.hstack([np.ones((n, 1)), Xc])
        beta = np.zeros(Xa.shape[1])
        ybar = np.clip(d.mean(), 1e-6, 1 - 1e-6)
        beta[0] = np.log(ybar / (1 - ybar))
        out = np.empty((lambdas.size, Xa.shape[1]))
        all_ok = True
        for i, lam in enumerate(lambdas):
            beta, _, ok = _newton_penalized(Xa, d, lam, beta, self.path_tol, self.max_iter,
                                            self.penalty == "l1")
            all_ok &= ok
            out[i] = beta
        if not all_ok:
            warnings.warn(f"{self.penalty} logistic path did not fully converge",
                          ConvergenceWarning, stacklevel=3)
        return out

    def _lambda_max(self, Xc, d):
        lam = float(np.max(np.abs(Xc.T @ (d - d.mean())))) / Xc.shape[0]
        if not lam > 0:
            lam = 1.0
        return lam / 1e-3 if self.penalty == "l2" else lam

    def fit(self, X, y):
        if self.penalty not in (None, "l1", "l2"):
            raise ValueError(f"unknown penalty {self.penalty!r}")
        X = check_X(self, X, reset=True)
        d = check_target(y, X.shape[0], binary=True)
        self.classes_ = np.array([0, 1])
        n = X.shape[0]
        x_mean = X.mean(axis=0)
        Xc = X - x_mean

        if self.penalty is None:
            Xa = np.hstack([np.ones((n, 1)), Xc])
            beta, self.n_iter_, ok = _irls(Xa, d, self.tol, self.max_iter)
            if not ok:
                warnings.warn("IRLS reached max_iter without meeting the deviance tolerance",
                              ConvergenceWarning, stacklevel=2)
            self.lambda_ = 0.0
        else:
            if self.lambdas is None:
                lambdas = log_grid(self._lambda_max(Xc, d), self.n_lambdas, self.lambda_ratio)
            else:
                lambdas = check_grid(self.lambdas)
            path = self._path(Xc, d, lambdas)
            if lambdas.size > 1:
                folds = fold_ids(n, self.n_folds, self.random_state)
                scores = np.zeros((self.n_folds, lambdas.size))
                for f in range(self.n_folds):
                    tr, te = folds != f, folds == f
                    if np.unique(d[tr]).size < 2:
                        raise ValueError("a CV training fold has a single class")
                    xm = X[tr].mean(axis=0)
                    coefs = self._path(X[tr] - xm, d[tr], lambdas)
                    eta = coefs[:, 0][None, :] + (X[te] - xm) @ coefs[:, 1:].T
                    p = expit(eta)
                    scores[f] = [binomial_deviance(d[te], p[:, j]) / te.sum()
                                 for j in range(lambdas.size)]
                self.cv_deviance_ = scores.mean(axis=0)
                best = argmin_prefer(self.cv_deviance_, lambdas)
            else:
                self.cv_deviance_ = np.full(1, np.nan)
                best = 0
            self.lambdas_ = lambdas
            self.lambda_ = float(lambdas[best])
            beta = path[best]

        self.coef_ = beta[1:].copy()
        self.intercept_ = float(beta[0] - x_mean @ self.coef_)
        return self

    def decision_function(self, X):
        X = check_X(self, X, reset=False)
        return X @ self.coef_ + self.intercept_

    def predict_proba(self, X):
        p = expit(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] > 0.5).astype(np.int64)


class ConstantProbabilityClassifier(ClassifierMixin, BaseEstimator):
    """Predicts the same censoring probability for every row."""

    def __init__(self, probability=0.0):
        self.probability = probability

    def fit(self, X, y=None):
        check_X(self, X, reset=True)
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError("probability must lie in [0, 1]")
        self.classes_ = np.array([0, 1])
        return self

    def predict_proba(self, X):
        X = check_X(self, X, reset=False)
        p = np.full(X.shape[0], float(self.probability))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] > 0.5).astype(np.int64)
