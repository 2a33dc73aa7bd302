import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from censored_demand.ensemble import (
    EnsembleModel,
    fit_ensemble,
    fit_weights,
    largest_eigenvalue,
    predict_ensemble,
    project_to_simplex,
)


class Constant:
    def __init__(self, value):
        self.value = value

    def predict(self, X):
        return np.full(np.asarray(X).shape[0], float(self.value))


class Column:
    def __init__(self, j):
        self.j = j

    def predict(self, X):
        return np.asarray(X)[:, self.j]


def objective(P, y, w):
    r = y - P @ w
    return float(r @ r)


def simplex_kkt_gap(P, y, w):
    """For w_j > 0 the gradient component must equal the smallest one."""
    grad = 2 * P.T @ (P @ w - y)
    return float(np.max(grad[w > 0]) - np.min(grad))


def test_single_member():
    rng = np.random.default_rng(0)
    assert fit_weights(rng.normal(size=(10, 1)), rng.normal(size=10)).weights.tolist() == [1.0]


def test_perfect_member():
    rng = np.random.default_rng(1)
    y = rng.normal(size=200)
    w = fit_weights(np.column_stack([y, rng.normal(size=200)]), y).weights
    assert w[0] >= 0.999


def test_two_member_grid_oracle(oracles):
    o = oracles["simplex_k2"]
    P, y = np.array(o["P"]), np.array(o["y"])
    fit = fit_weights(P, y)
    assert abs(fit.weights[0] - o["w1"]) <= 2e-4
    assert fit.objective <= o["objective"] * (1 + 1e-8)


def test_three_member_grid_oracle(oracles):
    o = oracles["simplex_k3"]
    P, y = np.array(o["P"]), np.array(o["y"])
    fit = fit_weights(P, y)
    np.testing.assert_allclose(fit.weights, o["weights"], atol=2e-3)
    assert fit.objective <= o["objective"] + 1e-9


def test_four_member_kkt():
    rng = np.random.default_rng(7)
    y = rng.normal(size=300)
    P = np.column_stack([y + rng.normal(0, s, 300) for s in (0.5, 0.7, 0.9, 2.0)])
    P[:, 3] += 1.0
    fit = fit_weights(P, y)
    assert simplex_kkt_gap(P, y, fit.weights) < 1e-6
    assert fit.converged


def test_degenerate_columns():
    rng = np.random.default_rng(3)
    col = rng.normal(size=50)
    fit = fit_weights(np.column_stack([col, col, col]), rng.normal(size=50))
    assert fit.degenerate
    np.testing.assert_allclose(fit.weights, 1 / 3)


@pytest.mark.parametrize("shape", [(3, 3), (2, 4)])
def test_needs_more_rows_than_members(shape):
    with pytest.raises(ValueError):
        fit_weights(np.ones(shape), np.ones(shape[0]))


def test_power_iteration():
    A = np.array([[4.0, 1.0], [1.0, 3.0]])
    assert largest_eigenvalue(A) == pytest.approx(np.linalg.eigvalsh(A).max(), rel=1e-10)


class TestPredict:
    def test_vertex(self):
        X = np.random.default_rng(0).normal(size=(6, 4))
        m = EnsembleModel(tuple(Column(j) for j in range(4)), np.array([1.0, 0, 0, 0]))
        np.testing.assert_array_equal(predict_ensemble(m, X), X[:, 0])

    def test_consensus(self):
        m = EnsembleModel((Constant(2.5), Constant(2.5), Constant(2.5)), np.array([0.2, 0.3, 0.5]))
        np.testing.assert_allclose(m.predict(np.zeros((4, 1))), 2.5)

    def test_average(self):
        m = EnsembleModel(tuple(Constant(v) for v in (0, 2, 4, 6)), np.full(4, 0.25))
        assert m.predict(np.zeros((1, 1)))[0] == 3.0

    @pytest.mark.parametrize("w", [[0.5, 0.6], [-0.1, 1.1], [1.0]])
    def test_invalid_weights(self, w):
        with pytest.raises(ValueError):
            EnsembleModel((Constant(0), Constant(1)), np.array(w))

    def test_fit_ensemble_records_member_rmse(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(100, 3))
        y = X[:, 1] + 0.1 * rng.normal(size=100)
        m = fit_ensemble([Column(0), Column(1), Column(2)], X, y, names=["a", "b", "c"])
        assert m.names == ("a", "b", "c")
        assert min(m.validation_rmse, key=m.validation_rmse.get) == "b"
        assert m.weights[1] == m.weights.max()
        ens_rmse = np.sqrt(np.mean((m.predict(X) - y) ** 2))
        assert ens_rmse <= min(m.validation_rmse.values()) + 1e-9


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.integers(2, 5), st.integers(20, 80))
def test_weights_are_feasible_optimal_and_beat_vertices(seed, K, n):
    rng = np.random.default_rng(seed)
    y = rng.normal(size=n)
    P = y[:, None] * rng.uniform(0, 1.5, K) + rng.normal(size=(n, K)) * rng.uniform(0.1, 2, K)
    fit = fit_weights(P, y)
    w = fit.weights
    assert np.all(w >= 0) and abs(w.sum() - 1) <= 1e-10
    assert simplex_kkt_gap(P, y, w) < 1e-6 * max(1.0, float(np.abs(2 * P.T @ y).max()))
    best_vertex = min(objective(P, y, e) for e in np.eye(K))
    assert fit.objective <= best_vertex + 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.permutations(range(4)))
def test_permutation_equivariance(seed, perm):
    rng = np.random.default_rng(seed)
    y = rng.normal(size=60)
    P = y[:, None] + rng.normal(size=(60, 4)) * np.array([0.3, 0.6, 1.0, 1.5])
    w = fit_weights(P, y).weights
    w_perm = fit_weights(P[:, list(perm)], y).weights
    np.testing.assert_allclose(w_perm, w[list(perm)], atol=1e-6)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=12))
def test_projection_lands_on_simplex(v):
    p = project_to_simplex(np.array(v))
    assert np.all(p >= 0) and abs(p.sum() - 1) < 1e-12
