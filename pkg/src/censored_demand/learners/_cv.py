"""Fold assignment, penalty grids and CV argmin with deterministic tie-breaks."""
from __future__ import annotations

import numpy as np

from .._validation import child_rng

TIE_TOL = 1e-12


def fold_ids(n: int, n_folds: int, random_state) -> np.ndarray:
    if n_folds < 2:
        raise ValueError("n_folds must be at least 2")
    if n < n_folds:
        raise ValueError(f"cannot split {n} rows into {n_folds} folds")
    perm = child_rng(random_state, 0xF01D).permutation(n)
    folds = np.empty(n, dtype=np.int64)
    folds[perm] = np.arange(n) % n_folds
    return folds


def log_grid(lam_max: float, n_lambdas: int = 100, ratio: float = 1e-4) -> np.ndarray:
    """Decreasing log-spaced grid from ``lam_max`` to ``ratio * lam_max``."""
    if not lam_max > 0:
        lam_max = 1.0
    return lam_max * np.logspace(0.0, np.log10(ratio), n_lambdas)


def check_grid(lambdas) -> np.ndarray:
    lambdas = np.asarray(lambdas, dtype=np.float64).ravel()
    if lambdas.size == 0:
        raise ValueError("empty penalty grid")
    if np.any(lambdas <= 0):
        raise ValueError("penalty grid must be strictly positive")
    if np.any(np.diff(lambdas) >= 0):
        raise ValueError("penalty grid must be strictly decreasing")
    return lambdas


def argmin_prefer(scores, candidates) -> int:
    """Index of the smallest score; near-ties go to the smallest candidate."""
    scores = np.asarray(scores, dtype=np.float64)
    candidates = np.asarray(candidates, dtype=np.float64)
    best = np.nanmin(scores)
    tied = np.flatnonzero(scores <= best + TIE_TOL)
    return int(tied[np.argmin(candidates[tied])])
