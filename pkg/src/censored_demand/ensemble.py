"""Stacking on the probability simplex: nonnegative member weights summing to one."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np
from numba import njit

from ._validation import parallel_map

DECREASE_TOL = 1e-12
PATIENCE = 50
MAX_ITER = 100_000


def project_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of ``v`` onto {w : w >= 0, sum(w) = 1} (sort-based)."""
    return _project(np.asarray(v, dtype=np.float64))


@njit(cache=True)
def _project(v):
    k = v.shape[0]
    u = np.sort(v)[::-1]
    css = 0.0
    theta = 0.0
    for j in range(k):
        css += u[j]
        t = (css - 1.0) / (j + 1)
        if u[j] - t > 0:
            theta = t
    w = np.empty(k)
    for j in range(k):
        w[j] = max(v[j] - theta, 0.0)
    return w


@njit(cache=True)
def _objective(G, b, yy, w):
    return w @ G @ w - 2.0 * (b @ w) + yy


@njit(cache=True)
def _projected_gradient(G, b, yy, w, step, tol, patience, max_iter):
    obj = _objective(G, b, yy, w)
    calm = 0
    it = 0
    while it < max_iter:
        it += 1
        grad = 2.0 * (G @ w - b)
        w = _project(w - step * grad)
        new_obj = _objective(G, b, yy, w)
        if obj - new_obj < tol:
            calm += 1
        else:
            calm = 0
        obj = new_obj
        if calm >= patience:
            return w, obj, it, True
    return w, obj, it, False


def largest_eigenvalue(A: np.ndarray, tol: float = 1e-14, max_iter: int = 10_000) -> float:
    """Power iteration for the top eigenvalue of a symmetric PSD matrix."""
    v = np.ones(A.shape[0]) / np.sqrt(A.shape[0])
    lam = 0.0
    for _ in range(max_iter):
        Av = A @ v
        norm = np.linalg.norm(Av)
        if norm == 0.0:
            return 0.0
        new_lam = float(v @ Av)
        v = Av / norm
        if abs(new_lam - lam) <= tol * max(abs(new_lam), 1.0):
            return new_lam
        lam = new_lam
    return lam


class WeightFit(NamedTuple):
    weights: np.ndarray
    objective: float
    iterations: int
    converged: bool
    degenerate: bool


def _polish(G, b, yy, w, obj):
    """Exact minimizer on the support found by projected gradient, if it is optimal.

    Solves the equality-constrained QP on the support through its KKT system
    and accepts the result only when it is feasible and not worse.
    """
    support = np.flatnonzero(w > 0)
    s = support.size
    K = np.zeros((s + 1, s + 1))
    K[:s, :s] = 2.0 * G[np.ix_(support, support)]
    K[:s, s] = 1.0
    K[s, :s] = 1.0
    rhs = np.concatenate([2.0 * b[support], [1.0]])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        return w, obj
    if not np.all(np.isfinite(sol)) or np.any(sol[:s] < 0):
        return w, obj
    cand = np.zeros_like(w)
    cand[support] = sol[:s]
    cand /= cand.sum()
    cand_obj = float(_objective(G, b, yy, cand))
    if cand_obj <= obj:
        return cand, cand_obj
    return w, obj


def fit_weights(P, y, *, tol: float = DECREASE_TOL, patience: int = PATIENCE,
                max_iter: int = MAX_ITER) -> WeightFit:
    """Minimize ``||y - P w||^2`` over the probability simplex by projected gradient.

    The step is ``1/L`` with ``L`` the largest eigenvalue of the objective's
    Hessian ``2 P'P``. Iteration stops once the objective has decreased by
    less than ``tol`` for ``patience`` consecutive steps. If every column of
    ``P`` is identical the objective is flat along the simplex and uniform
    weights are returned with ``degenerate=True``.
    """
    P = np.asarray(P, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if P.ndim != 2 or P.shape[0] != y.size:
        raise ValueError("P must be (n, K) with n = len(y)")
    n, K = P.shape
    if K < 1:
        raise ValueError("need at least one member")
    if n <= K:
        raise ValueError(f"need more rows than members (n={n}, K={K})")
    if not (np.all(np.isfinite(P)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite predictions or responses")
    G = P.T @ P
    b = P.T @ y
    yy = float(y @ y)
    if K == 1:
        w = np.ones(1)
        return WeightFit(w, float(_objective(G, b, yy, w)), 0, True, False)
    if np.all(P == P[:, :1]):
        w = np.full(K, 1.0 / K)
        return WeightFit(w, float(_objective(G, b, yy, w)), 0, True, True)
    L = 2.0 * largest_eigenvalue(G)
    w0 = np.full(K, 1.0 / K)
    w, obj, it, ok = _projected_gradient(G, b, yy, w0, 1.0 / L, tol, patience, max_iter)
    if not ok:
        warnings.warn(f"simplex weights: iteration cap {max_iter} reached", stacklevel=2)
    w, obj = _polish(G, b, yy, w, float(obj))
    # a vertex is feasible too; never return something worse than the best single member
    vertex_obj = np.diag(G) - 2.0 * b + yy
    j = int(np.argmin(vertex_obj))
    if vertex_obj[j] < obj:
        w, obj = np.eye(K)[j], float(vertex_obj[j])
    return WeightFit(w, float(obj), int(it), bool(ok), False)


@dataclass(frozen=True)
class EnsembleModel:
    """Members combined as ``sum_j w_j * member_j.predict(X)`` in fixed member order."""

    members: tuple
    weights: np.ndarray
    names: tuple[str, ...] = ()
    validation_rmse: Mapping[str, float] = field(default_factory=dict)
    degenerate: bool = False

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if w.shape != (len(self.members),):
            raise ValueError("one weight per member required")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-10:
            raise ValueError("weights must be nonnegative and sum to 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if not self.names:
            object.__setattr__(self, "names", tuple(f"member{j}" for j in range(len(w))))

    def member_predictions(self, X, n_threads: int | None = 1) -> np.ndarray:
        cols = parallel_map(lambda m: m.predict(X), self.members, n_threads)
        return np.column_stack(cols)

    def predict(self, X, n_threads: int | None = 1) -> np.ndarray:
        # zero-weight members contribute exactly nothing, so they are skipped
        active = [j for j in range(len(self.members)) if self.weights[j] > 0]
        cols = parallel_map(lambda j: self.members[j].predict(X), active, n_threads)
        out = np.zeros(np.asarray(X).shape[0])
        for j, col in zip(active, cols):
            out += self.weights[j] * col
        return out


def predict_ensemble(model: EnsembleModel, X) -> np.ndarray:
    return model.predict(X)


def fit_ensemble(members: Sequence, X_val, y_val, names: Sequence[str] | None = None,
                 n_threads: int | None = 1) -> EnsembleModel:
    """Weights from the members' validation predictions."""
    members = tuple(members)
    P = np.column_stack(parallel_map(lambda m: m.predict(X_val), members, n_threads))
    y_val = np.asarray(y_val, dtype=np.float64)
    fit = fit_weights(P, y_val)
    names = tuple(names) if names is not None else tuple(f"member{j}" for j in range(len(members)))
    rmse = {nm: float(np.sqrt(np.mean((P[:, j] - y_val) ** 2))) for j, nm in enumerate(names)}
    return EnsembleModel(members, fit.weights, names, rmse, fit.degenerate)
