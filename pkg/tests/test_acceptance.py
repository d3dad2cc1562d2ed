"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the verdict lines are
printed even when output capture is on.
"""

from __future__ import annotations

import time

import numpy as np
import pytest

from oracles import (
    batch_objective,
    loop_correlation,
    loop_downside,
    loop_sharpe_ir,
    loop_tracking_error,
    loop_turnover,
    loop_var_cvar,
    loop_volatility,
    naive_rips_diagram,
    plane_grid_minimum,
    tent_levels,
)
from topotrack import penalty as pen
from topotrack.backtest import BacktestConfig, WindowPlan, run_backtest, support_recall
from topotrack.market_data import ReturnPanel
from topotrack.metrics import (
    annualized_volatility,
    correlation,
    downside_deviation,
    sharpe_ir,
    tracking_error,
    turnover,
    var_cvar,
)
from topotrack.solver import TrackingProblem, solve
from topotrack.synth import generate_market
from topotrack.tda import landscape_from_diagram, landscape_norm, rips_persistence, takens_embed


@pytest.fixture
def verdict(capsys):
    def emit(name: str, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        return ok

    return emit


def test_persistence_matches_boundary_matrix_reduction(verdict):
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    mismatches = 0
    for trial in range(500):
        n = int(rng.integers(1, 13))
        if trial % 5 == 4:
            # lattice points produce many tied edge lengths
            pts = rng.integers(0, 3, size=(n, 3)).astype(float)
        else:
            pts = rng.normal(size=(n, 3)) * rng.uniform(0.1, 10.0)
        if rips_persistence(pts).sorted_features() != naive_rips_diagram(pts):
            mismatches += 1
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 60.0
    verdict("persistence oracle", ok, f"500 clouds, {mismatches} mismatches, {elapsed:.1f}s (limit 60s)")
    assert ok


def test_landscape_matches_pointwise_tent_maximum(verdict):
    rng = np.random.default_rng(202)
    t0 = time.perf_counter()
    worst = 0.0
    for trial in range(200):
        m = int(rng.integers(1, 21))
        births = rng.uniform(0.0, 5.0, m)
        deaths = births + rng.exponential(1.5, m)
        bars = list(zip(births, deaths))
        if trial % 4 == 0 and m > 1:
            bars[-1] = bars[0]  # duplicate bar
        if trial % 4 == 1 and m > 1:
            bars[-1] = (bars[0][1], bars[0][1] + 1.0)  # shared endpoint
        x = np.linspace(min(b for b, _ in bars) - 0.5, max(d for _, d in bars) + 0.5, 1000)
        levels = tent_levels(bars, x)
        ls = landscape_from_diagram(bars)
        for k in range(1, m + 1):
            worst = max(worst, float(np.max(np.abs(ls.evaluate(k, x) - levels[k - 1]))))
        worst = max(worst, float(np.max(np.abs(ls.evaluate(m + 1, x)))))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed < 10.0
    verdict("landscape oracle", ok, f"200 diagrams, max |diff| {worst:.2e} (tol 1e-9), {elapsed:.1f}s (limit 10s)")
    assert ok


def test_scale_equivariance(verdict):
    rng = np.random.default_rng(303)
    worst_bar = worst_norm = 0.0
    for trial in range(100):
        if trial % 2:
            pts = takens_embed(rng.normal(0, 0.01, 42)).points
        else:
            pts = rng.normal(size=(int(rng.integers(3, 30)), 3))
        base = rips_persistence(pts)
        norms = [landscape_norm(landscape_from_diagram(base, d)).value for d in (0, 1)]
        for c in (0.5, 2.0, 10.0):
            scaled = rips_persistence(pts * c)
            for dim in (0, 1):
                a = np.sort(base.bars(dim), axis=0) * c
                b = np.sort(scaled.bars(dim), axis=0)
                assert a.shape == b.shape
                if a.size:
                    worst_bar = max(worst_bar, float(np.max(np.abs(a - b) / np.maximum(np.abs(a), 1e-300))))
                n_scaled = landscape_norm(landscape_from_diagram(scaled, dim)).value
                if norms[dim] > 0:
                    worst_norm = max(worst_norm, abs(n_scaled - c * c * norms[dim]) / (c * c * norms[dim]))
                else:
                    assert n_scaled == 0.0
    ok = worst_bar <= 1e-9 and worst_norm <= 1e-8
    verdict(
        "scale equivariance", ok,
        f"100 clouds x c in {{0.5, 2, 10}}: bar rel err {worst_bar:.2e} (tol 1e-9), norm rel err {worst_norm:.2e} (tol 1e-8)",
    )
    assert ok


def _random_problem(rng, slope: bool):
    X = rng.normal(size=(50, 3))
    w_true = rng.dirichlet(np.ones(3)) * 1.4 - 0.1
    w_true /= w_true.sum()
    y = X @ w_true + rng.normal(0.0, rng.uniform(0.05, 1.0), 50)
    g = float(np.max(np.abs(2 * X.T @ y)))
    if slope:
        seq = np.sort(rng.uniform(0.0, 0.5 * g, 3))[::-1]
        spec = pen.PenaltySpec(np.zeros(3), np.zeros(3), "SLOPE", slope_sequence=seq)
        return X, y, spec, {"slope": seq}
    alphas = rng.uniform(0.0, 0.5 * g, 3) * (rng.random(3) < 0.8)
    betas = rng.uniform(0.0, 6.0, 3) * (rng.random(3) < 0.5)
    spec = pen.PenaltySpec(alphas, betas, "TDAEN12")
    return X, y, spec, {"alphas": alphas, "betas": betas}


def _random_feasible(rng, center, count=1_000_000, chunk=100_000):
    for start in range(0, count, chunk):
        m = min(chunk, count - start)
        scale = 10.0 ** rng.uniform(-6, 0.5, (m, 1))
        w12 = center[:2] + rng.normal(size=(m, 2)) * scale
        w12[: m // 4] = rng.uniform(-3, 3, (m // 4, 2))
        yield np.column_stack([w12, 1.0 - w12.sum(axis=1)])


def test_solver_against_grid_and_random_points(verdict):
    rng = np.random.default_rng(404)
    t0 = time.perf_counter()
    worst_grid = worst_kkt = 0.0
    beaten = 0
    for trial in range(100):
        X, y, spec, terms = _random_problem(rng, slope=trial % 5 == 4)
        wv, diag = solve(TrackingProblem(X, y, spec))
        w = wv.weights
        f = float(batch_objective(X, y, w[None, :], **terms)[0])
        f_grid = plane_grid_minimum(X, y, terms, center=(1 / 3, 1 / 3), half_width=6.0)
        worst_grid = max(worst_grid, f - f_grid)
        worst_kkt = max(worst_kkt, diag.kkt_residual)
        best_random = min(float(np.min(batch_objective(X, y, W, **terms))) for W in _random_feasible(rng, w))
        if best_random < f - 1e-12 * max(1.0, abs(f)):
            beaten += 1
    elapsed = time.perf_counter() - t0
    ok = worst_grid <= 1e-6 and beaten == 0 and worst_kkt <= 1e-8 and elapsed < 300.0
    verdict(
        "solver oracle", ok,
        f"100 problems (20 SLOPE): max f - f_grid {worst_grid:.2e} (tol 1e-6), beaten by random points in {beaten}, "
        f"max KKT {worst_kkt:.2e} (tol 1e-8), {elapsed:.1f}s (limit 300s)",
    )
    assert ok


def test_slope_reductions(verdict):
    rng = np.random.default_rng(505)
    worst_l1 = worst_te = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 11))
        T = int(rng.integers(3 * n, 120))
        X = rng.normal(0.0, 0.01, (T, n))
        y = X @ rng.dirichlet(np.ones(n)) + rng.normal(0.0, 0.002, T)
        c = float(rng.uniform(0.01, 0.5)) * float(np.max(np.abs(2 * X.T @ y)))
        slope_c = pen.PenaltySpec(np.zeros(n), np.zeros(n), "SLOPE", slope_sequence=np.full(n, c))
        l1 = pen.PenaltySpec(np.full(n, c), np.zeros(n), "TDA_L1")
        w_s, _ = solve(TrackingProblem(X, y, slope_c))
        w_l, _ = solve(TrackingProblem(X, y, l1))
        worst_l1 = max(worst_l1, float(np.max(np.abs(w_s.weights - w_l.weights))))
        slope_0 = pen.PenaltySpec(np.zeros(n), np.zeros(n), "SLOPE", slope_sequence=np.zeros(n))
        w_z, _ = solve(TrackingProblem(X, y, slope_0))
        w_te, _ = solve(TrackingProblem(X, y, pen.PenaltySpec.zero(n)))
        worst_te = max(worst_te, float(np.max(np.abs(w_z.weights - w_te.weights))))
    ok = worst_l1 <= 1e-8 and worst_te <= 1e-8
    verdict(
        "SLOPE reductions", ok,
        f"50 instances: constant vs L1 max |dw| {worst_l1:.2e}, zero vs TE max |dw| {worst_te:.2e} (tol 1e-8)",
    )
    assert ok


def test_metric_suite_against_naive_loops(verdict):
    rng = np.random.default_rng(606)
    worst = 0.0

    def gap(a, b):
        return abs(a - b) / max(1.0, abs(b))

    for _ in range(100):
        T = int(rng.integers(5, 400))
        q = rng.normal(3e-4, 0.012, T)
        p = q + rng.normal(rng.uniform(-5e-4, 5e-4), rng.uniform(1e-4, 3e-3), T)
        pl, ql = p.tolist(), q.tolist()
        alpha = float(rng.choice([0.8, 0.9, 0.95, 0.99]))
        hist = [rng.dirichlet(np.ones(6)) for _ in range(int(rng.integers(2, 12)))]
        pairs = [
            (tracking_error(p, q), loop_tracking_error(pl, ql)),
            (correlation(p, q), loop_correlation(pl, ql)),
            (annualized_volatility(p), loop_volatility(pl)),
            (downside_deviation(p, q), loop_downside(pl, ql)),
            *zip(var_cvar(p, alpha), loop_var_cvar(pl, alpha)),
            *zip(sharpe_ir(p, q), loop_sharpe_ir(pl, ql)),
            (turnover(hist), loop_turnover([h.tolist() for h in hist])),
        ]
        worst = max(worst, max(gap(a, b) for a, b in pairs))
    var, _ = var_cvar([-0.02, -0.01, 0.0, 0.01, 0.02], alpha=0.8)
    ok = worst <= 1e-12 and var == 0.02
    verdict("metric suite", ok, f"100 series pairs, max gap {worst:.2e} (tol 1e-12); VaR example = {var!r} (expect 0.02)")
    assert ok


def test_synthetic_end_to_end(verdict):
    market = generate_market(n_assets=50, k_true=5, n_days=1500, noise=5e-4, seed=0)
    t0 = time.perf_counter()
    reports = run_backtest(market.returns, WindowPlan(1500, 504, 21), ("TE", "TDA_L1", "TDAEN12"), BacktestConfig())
    elapsed = time.perf_counter() - t0
    te = reports["TE"].metrics.terror
    lines, ok = [], elapsed < 600.0
    for kind in ("TDA_L1", "TDAEN12"):
        r = reports[kind]
        ratio = r.metrics.terror / te
        recall = support_recall(r, market.support, top=5)
        good = ratio <= 1.5 and r.metrics.mean_assets <= 25 and recall >= 0.8
        ok &= good
        lines.append(f"{kind} TE ratio {ratio:.3f} (<=1.5), assets {r.metrics.mean_assets:.1f} (<=25), recall {recall:.2f} (>=0.8)")
    verdict("synthetic end-to-end", ok, "; ".join(lines) + f"; {elapsed:.0f}s (limit 600s)")
    assert ok


def test_dim0_norm_increases_with_volatility(verdict):
    plan = pen.SubSeriesPlan()
    means = []
    for sigma in (0.01, 0.02, 0.04):
        vals = []
        for seed in range(200):
            r = np.random.default_rng(seed).normal(0.0, sigma, plan.days)
            vals.append(pen.tda_coefficients(r, plan)[0])
        means.append(float(np.mean(vals)))
    ok = means[0] < means[1] < means[2]
    verdict("monotone risk response", ok, "mean dim-0 norm " + " < ".join(f"{m:.4e}" for m in means))
    assert ok


def test_protocol_window_counts(verdict):
    a = WindowPlan(4957, 504, 21).count
    b = WindowPlan(1354, 504, 21).count
    ok = a == 212 and b == 40
    verdict("protocol counts", ok, f"4957 days -> {a} windows (expect 212), 1354 days -> {b} (expect 40)")
    assert ok


def test_no_lookahead(verdict):
    market = generate_market(n_assets=8, k_true=3, n_days=504 + 3 * 21, noise=5e-4, seed=7)
    panel = market.returns
    plan = WindowPlan(panel.n_days, 504, 21)
    kinds = pen.KINDS
    base = run_backtest(panel, plan, kinds)
    rng = np.random.default_rng(9)
    changed = []
    for r, (_, oos) in enumerate(plan.windows):
        X = panel.asset_returns.copy()
        y = panel.index_returns.copy()
        X[oos.start : oos.stop] = rng.uniform(-0.3, 0.3, (len(oos), panel.n_assets))
        y[oos.start : oos.stop] = rng.uniform(-0.3, 0.3, len(oos))
        mutated = run_backtest(ReturnPanel(panel.dates, panel.tickers, y, X), plan, kinds)
        for kind in kinds:
            for k in range(r + 1):
                a = base[kind].per_window[k].weights.weights
                b = mutated[kind].per_window[k].weights.weights
                if a.tobytes() != b.tobytes():
                    changed.append((kind, r, k))
    # control: the same comparison does see an in-sample mutation
    X = panel.asset_returns.copy()
    X[plan.windows[0][0].stop - 1] += 0.05
    control = run_backtest(ReturnPanel(panel.dates, panel.tickers, panel.index_returns, X), plan, ("TE",))
    sensitive = base["TE"].per_window[0].weights.weights.tobytes() != control["TE"].per_window[0].weights.weights.tobytes()
    ok = not changed and sensitive
    verdict(
        "no lookahead", ok,
        f"{plan.count} windows x {len(kinds)} kinds, out-of-sample rows replaced; {len(changed)} weight vectors changed; "
        f"in-sample control {'detected' if sensitive else 'NOT detected'}",
    )
    assert ok
