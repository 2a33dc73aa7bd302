"""Accuracy and inference: RMSE, SKU-panel bootstrap tests and price marginal effects.

All bootstrap procedures resample SKUs with replacement and weight each row
by its SKU's draw multiplicity, so within-SKU dependence is preserved.
Replication ``r`` draws from its own generator derived from ``(seed, r)``,
which makes results independent of thread count and execution order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from ._validation import child_rng, parallel_map
from .datamodel import PRICE_COLUMN, DesignMatrix

DEFAULT_REPLICATIONS = 1000
PERTURBATION_RANGE = (0.01, 1.0)


def rmse(predicted, actual) -> float:
    p = np.asarray(predicted, dtype=np.float64).ravel()
    a = np.asarray(actual, dtype=np.float64).ravel()
    if p.shape != a.shape:
        raise ValueError(f"length mismatch: {p.size} predictions vs {a.size} actuals")
    if p.size == 0:
        raise ValueError("rmse of an empty vector")
    return float(np.sqrt(np.mean((p - a) ** 2)))


def _predict(model, X) -> np.ndarray:
    return np.asarray(model.predict(X), dtype=np.float64)


def group_codes(groups) -> tuple[np.ndarray, int]:
    """Integer code per row and number of distinct groups."""
    _, codes = np.unique(np.asarray(groups), return_inverse=True)
    return codes.ravel(), int(codes.max()) + 1 if codes.size else 0


def sku_multiplicities(rng: np.random.Generator, n_groups: int) -> np.ndarray:
    """How many times each SKU appears in one with-replacement draw of ``n_groups`` SKUs."""
    return np.bincount(rng.integers(0, n_groups, n_groups), minlength=n_groups)


@dataclass(frozen=True)
class BootstrapResult:
    point: float
    standard_error: float
    t_statistic: float
    p_value: float
    replications: int
    draws: np.ndarray

    def to_dict(self) -> dict:
        return {"point": self.point, "standard_error": self.standard_error,
                "t_statistic": _finite_or_none(self.t_statistic),
                "p_value": _finite_or_none(self.p_value), "replications": self.replications}


def _finite_or_none(x):
    return float(x) if np.isfinite(x) else None


def summarize_draws(point: float, draws: np.ndarray) -> BootstrapResult:
    """se is the sample std (ddof=1) of the draws; p is two-sided normal; se == 0 gives NaN t and p."""
    se = float(np.std(draws, ddof=1)) if draws.size > 1 else float("nan")
    if se > 0:
        t = point / se
        p = float(2.0 * norm.sf(abs(t)))
    else:
        t = p = float("nan")
    return BootstrapResult(float(point), se, float(t), p, int(draws.size), draws)


def bootstrap_rmse_diff(model_a, model_b, test: DesignMatrix,
                        replications: int = DEFAULT_REPLICATIONS, seed: int = 0,
                        n_threads: int | None = 1) -> BootstrapResult:
    """Panel bootstrap of ``RMSE(model_a) - RMSE(model_b)`` on the test rows."""
    codes, G = group_codes(test.groups)
    if G < 2:
        raise ValueError("the panel bootstrap needs at least 2 distinct SKUs")
    if replications < 2:
        raise ValueError("replications must be >= 2")
    ea = (_predict(model_a, test.X) - test.y) ** 2
    eb = (_predict(model_b, test.X) - test.y) ** 2
    sse_a = np.bincount(codes, ea, minlength=G)
    sse_b = np.bincount(codes, eb, minlength=G)
    count = np.bincount(codes, minlength=G).astype(np.float64)
    point = float(np.sqrt(ea.mean()) - np.sqrt(eb.mean()))

    def one(r):
        m = sku_multiplicities(child_rng(seed, r), G)
        rows = m @ count
        return np.sqrt(m @ sse_a / rows) - np.sqrt(m @ sse_b / rows)

    draws = np.asarray(parallel_map(one, range(replications), n_threads), dtype=np.float64)
    return summarize_draws(point, draws)


@dataclass(frozen=True)
class MarginalEffectEstimate:
    mean_effect: float
    standard_error: float
    replications: int
    perturbation_range: tuple[float, float]
    draws: np.ndarray
    deltas: np.ndarray

    @property
    def t_statistic(self) -> float:
        return self.mean_effect / self.standard_error if self.standard_error > 0 else float("nan")

    def to_dict(self) -> dict:
        return {"mean_effect": self.mean_effect, "standard_error": self.standard_error,
                "replications": self.replications,
                "perturbation_range": list(self.perturbation_range)}


def marginal_effect(model, X: DesignMatrix | np.ndarray, log_price_column: str | int = PRICE_COLUMN,
                    replications: int = DEFAULT_REPLICATIONS, seed: int = 0,
                    perturbation_range: tuple[float, float] = PERTURBATION_RANGE,
                    groups=None, n_threads: int | None = 1) -> MarginalEffectEstimate:
    """Average finite-difference response of predictions to a log-price shift.

    Each replication draws a SKU-panel resample and one step
    ``delta ~ U[lo, hi]`` that is added to the standardized log-price column;
    its effect is the resample-weighted mean of
    ``(predict(X + delta) - predict(X)) / delta``. The estimate is the mean
    over replications and the standard error their sample std.
    """
    if isinstance(X, DesignMatrix):
        j = X.column_index(log_price_column) if isinstance(log_price_column, str) \
            else int(log_price_column)
        groups = X.groups if groups is None else groups
        X = X.X
    else:
        if not isinstance(log_price_column, (int, np.integer)):
            raise KeyError("pass a column index when X is a plain array")
        j = int(log_price_column)
        if not 0 <= j < X.shape[1]:
            raise KeyError(f"column {j} out of range")
    X = np.asarray(X, dtype=np.float64)
    lo, hi = (float(v) for v in perturbation_range)
    if not 0 < lo <= hi:
        raise ValueError("perturbation range must satisfy 0 < lo <= hi")
    if replications < 2:
        raise ValueError("replications must be >= 2")
    if groups is None:
        codes, G = np.arange(X.shape[0]), X.shape[0]
    else:
        codes, G = group_codes(groups)
    base = _predict(model, X)

    def one(r):
        rng = child_rng(seed, r)
        delta = float(rng.uniform(lo, hi))
        w = sku_multiplicities(rng, G)[codes].astype(np.float64)
        Xp = X.copy()
        Xp[:, j] += delta
        diff = (_predict(model, Xp) - base) / delta
        return float(w @ diff / w.sum()), delta

    out = parallel_map(one, range(replications), n_threads)
    draws = np.array([o[0] for o in out])
    deltas = np.array([o[1] for o in out])
    return MarginalEffectEstimate(float(draws.mean()), float(draws.std(ddof=1)),
                                  int(replications), (lo, hi), draws, deltas)


def ols_coefficient_bootstrap(X: np.ndarray, y: np.ndarray, groups, column: int,
                              replications: int = DEFAULT_REPLICATIONS, seed: int = 0,
                              n_threads: int | None = 1) -> BootstrapResult:
    """SKU-panel bootstrap of one OLS slope (with intercept).

    Per-SKU cross-product matrices are accumulated once, so each replication
    only sums them with its multiplicities and solves a small system.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, k = X.shape
    Xa = np.hstack([np.ones((n, 1)), X])
    codes, G = group_codes(groups)
    if G < 2:
        raise ValueError("the panel bootstrap needs at least 2 distinct SKUs")
    order = np.argsort(codes, kind="stable")
    bounds = np.searchsorted(codes[order], np.arange(G + 1))
    grams = np.empty((G, k + 1, k + 1))
    moments = np.empty((G, k + 1))
    for g in range(G):
        rows = order[bounds[g]:bounds[g + 1]]
        Xg = Xa[rows]
        grams[g] = Xg.T @ Xg
        moments[g] = Xg.T @ y[rows]
    point = float(np.linalg.lstsq(Xa, y, rcond=None)[0][column + 1])
    flat = grams.reshape(G, -1)

    def one(r):
        m = sku_multiplicities(child_rng(seed, r), G).astype(np.float64)
        A = (m @ flat).reshape(k + 1, k + 1)
        beta = np.linalg.lstsq(A, m @ moments, rcond=None)[0]
        return float(beta[column + 1])

    draws = np.asarray(parallel_map(one, range(replications), n_threads))
    return summarize_draws(point, draws)
