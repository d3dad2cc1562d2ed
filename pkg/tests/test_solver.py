import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import batch_objective, plane_grid_minimum
from topotrack.penalty import PenaltySpec, slope_spec
from topotrack.solver import (
    SolveOptions,
    SolverError,
    TrackingProblem,
    apply_threshold,
    objective_value,
    prox_sorted_l1,
    solve,
    sorted_l1,
)


def panel(seed=0, T=80, n=3, scale=0.01):
    rng = np.random.default_rng(seed)
    return rng, rng.normal(0.0, scale, (T, n))


def test_single_asset_gets_everything():
    X = np.random.default_rng(0).normal(size=(20, 1))
    wv, diag = solve(TrackingProblem(X, X[:, 0] * 2, PenaltySpec([5.0], [3.0], "TDAEN12")))
    assert wv.weights.tolist() == [1.0]
    assert diag.converged


def test_replicates_single_column():
    _, X = panel()
    wv, _ = solve(TrackingProblem(X, X[:, 2].copy()))
    np.testing.assert_allclose(wv.weights, [0, 0, 1], atol=1e-6)


def test_large_penalties_zero_out_assets():
    rng, X = panel(1)
    y = X[:, 0] + rng.normal(0, 1e-4, X.shape[0])
    wv, _ = solve(TrackingProblem(X, y, PenaltySpec([0.0, 100.0, 100.0], np.zeros(3), "TDA_L1")))
    assert abs(wv.weights[1]) < 1e-8 and abs(wv.weights[2]) < 1e-8
    assert wv.weights[0] == 1.0


def test_weights_sum_to_one():
    rng, X = panel(2, n=12)
    y = X @ rng.dirichlet(np.ones(12))
    alphas = rng.uniform(0, 1e-3, 12)
    wv, diag = solve(TrackingProblem(X, y, PenaltySpec(alphas, alphas, "TDAEN11")))
    assert abs(wv.weights.sum() - 1.0) < 1e-12
    assert diag.kkt_residual <= 1e-8
    assert wv.nonzero == np.count_nonzero(wv.weights)


def test_objective_examples():
    _, X = panel(3)
    y = X @ np.array([0.2, 0.3, 0.5])
    assert objective_value(TrackingProblem(X, y), [0.2, 0.3, 0.5]) == pytest.approx(0.0, abs=1e-20)
    y1 = X[:, 0].copy()
    prob = TrackingProblem(X, y1, PenaltySpec([2.0, 1.0, 1.0], np.zeros(3), "TDA_L1"))
    assert objective_value(prob, [1.0, 0.0, 0.0]) == 2.0


def test_objective_term_by_term():
    rng, X = panel(4, n=4)
    y = rng.normal(0, 0.01, X.shape[0])
    a, b = rng.uniform(0, 1, 4), rng.uniform(0, 1, 4)
    w = rng.normal(size=4)
    expected = 0.0
    for t in range(X.shape[0]):
        r = sum(X[t, i] * w[i] for i in range(4)) - y[t]
        expected += r * r
    for i in range(4):
        expected += a[i] * abs(w[i]) + b[i] ** 2 * w[i] ** 2
    got = objective_value(TrackingProblem(X, y, PenaltySpec(a, b, "TDAEN12")), w)
    assert got == pytest.approx(expected, rel=1e-12)


def test_threshold_examples():
    wv = apply_threshold([0.6, 0.4, 3e-9])
    np.testing.assert_allclose(wv.weights, np.array([0.6, 0.4, 0.0]) / (0.6 + 0.4), rtol=1e-15)
    assert wv.weights[2] == 0.0
    assert apply_threshold([0.6, 0.4]).weights.tolist() == [0.6, 0.4]
    assert apply_threshold([1.0, -4e-9, 4e-9]).weights.tolist() == [1.0, 0.0, 0.0]
    with pytest.raises(SolverError):
        apply_threshold([1e-9, 1e-9])


def test_sorted_l1_and_prox():
    assert sorted_l1([1.0, -3.0, 2.0], [3.0, 2.0, 1.0]) == 3 * 3 + 2 * 2 + 1 * 1
    v = np.array([3.0, -1.0, 0.5])
    np.testing.assert_allclose(prox_sorted_l1(v, np.full(3, 0.7)), np.sign(v) * np.maximum(np.abs(v) - 0.7, 0))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_prox_sorted_l1_is_optimal(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 8))
    v = rng.normal(size=n) * 3
    lam = np.sort(rng.uniform(0, 2, n))[::-1]
    x = prox_sorted_l1(v, lam)

    def f(z):
        return 0.5 * np.sum((z - v) ** 2) + sorted_l1(z, lam)

    for _ in range(200):
        z = x + rng.normal(size=n) * 10.0 ** rng.uniform(-6, 0)
        assert f(x) <= f(z) + 1e-12


@pytest.mark.parametrize("seed", range(6))
def test_slope_matches_grid(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(50, 3))
    y = X @ np.array([0.6, 0.3, 0.1]) + rng.normal(0, 0.3, 50)
    spec = slope_spec(3, float(rng.uniform(1, 40)))
    wv, diag = solve(TrackingProblem(X, y, spec))
    f = float(batch_objective(X, y, wv.weights[None, :], slope=spec.slope_sequence)[0])
    g = plane_grid_minimum(X, y, {"slope": spec.slope_sequence}, center=(1 / 3, 1 / 3), half_width=5.0)
    assert f <= g + 1e-6
    assert diag.kkt_residual <= 1e-8


def test_warm_start_reaches_same_point():
    rng, X = panel(5, n=10)
    y = X @ rng.dirichlet(np.ones(10))
    spec = PenaltySpec(rng.uniform(0, 5e-4, 10), np.zeros(10), "TDA_L1")
    cold, _ = solve(TrackingProblem(X, y, spec))
    warm, _ = solve(TrackingProblem(X, y, spec), warm_start=np.full(10, 0.1))
    np.testing.assert_allclose(cold.weights, warm.weights, atol=1e-10)


def test_options_validated():
    with pytest.raises(ValueError):
        SolveOptions(tolerance=0.0)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        TrackingProblem(np.zeros((5, 2)), np.zeros(4))
