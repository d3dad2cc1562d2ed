"""Slow, independent reference implementations used to cross-check the package.

Each oracle is written in the most literal way possible: explicit loops, full
matrices, no shared helpers beyond the Euclidean distance matrix (so that
edge lengths are bit-identical and exact comparison is meaningful).
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from topotrack.tda import pairwise_distances


# ---------------------------------------------------------------------------
# persistence by full boundary-matrix reduction over Z/2


def naive_rips_diagram(points) -> list[tuple[float, float, int]]:
    """All simplices up to dimension 2, one global boundary matrix, standard
    left-to-right column reduction. Returns sorted (birth, death, dim) with
    zero-length pairs removed; essential classes get death = inf."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = pts.shape[0]
    if n == 0:
        return []
    dist = pairwise_distances(pts)
    simplices = [((i,), 0.0) for i in range(n)]
    simplices += [((i, j), float(dist[i, j])) for i, j in itertools.combinations(range(n), 2)]
    simplices += [
        ((i, j, k), max(float(dist[i, j]), float(dist[i, k]), float(dist[j, k])))
        for i, j, k in itertools.combinations(range(n), 3)
    ]
    # faces always precede cofaces: sort by value, then dimension
    simplices.sort(key=lambda s: (s[1], len(s[0])))
    index = {s: pos for pos, (s, _) in enumerate(simplices)}

    columns = []
    for s, _ in simplices:
        if len(s) == 1:
            columns.append(set())
        else:
            columns.append({index[f] for f in itertools.combinations(s, len(s) - 1)})

    low_owner: dict[int, int] = {}
    pairs = []
    for j in range(len(columns)):
        col = columns[j]
        while col and max(col) in low_owner:
            col ^= columns[low_owner[max(col)]]
        if col:
            i = max(col)
            low_owner[i] = j
            pairs.append((i, j))

    out = []
    killed = set()
    for i, j in pairs:
        killed.add(i)
        birth, death = simplices[i][1], simplices[j][1]
        dim = len(simplices[i][0]) - 1
        if death > birth:
            out.append((birth, death, dim))
    destroyers = {j for _, j in pairs}
    for pos, (s, val) in enumerate(simplices):
        if len(s) <= 2 and pos not in killed and pos not in destroyers:
            out.append((val, math.inf, len(s) - 1))
    return sorted(out)


# ---------------------------------------------------------------------------
# landscapes


def tent_levels(bars, x) -> np.ndarray:
    """Row k-1 holds the k-th largest tent max(0, min(x - b, d - x)) at each x."""
    x = np.asarray(x, dtype=float)
    if len(bars) == 0:
        return np.zeros((0, x.size))
    b = np.array([bar[0] for bar in bars], dtype=float)[:, None]
    d = np.array([bar[1] for bar in bars], dtype=float)[:, None]
    tents = np.maximum(0.0, np.minimum(x[None, :] - b, d - x[None, :]))
    return -np.sort(-tents, axis=0)


# ---------------------------------------------------------------------------
# metrics by explicit loops


def loop_tracking_error(p, q):
    s = 0.0
    for a, b in zip(p, q):
        s += (a - b) ** 2
    return math.sqrt(s / (len(p) - 1))


def loop_mean(x):
    s = 0.0
    for v in x:
        s += v
    return s / len(x)


def loop_std(x):
    m = loop_mean(x)
    s = 0.0
    for v in x:
        s += (v - m) ** 2
    return math.sqrt(s / (len(x) - 1))


def loop_correlation(p, q):
    mp, mq = loop_mean(p), loop_mean(q)
    sxy = sxx = syy = 0.0
    for a, b in zip(p, q):
        sxy += (a - mp) * (b - mq)
        sxx += (a - mp) ** 2
        syy += (b - mq) ** 2
    return sxy / math.sqrt(sxx * syy)


def loop_volatility(p):
    s = 0.0
    for v in p:
        s += v * v
    return math.sqrt(252.0 * s / len(p))


def loop_downside(p, q):
    s = 0.0
    for a, b in zip(p, q):
        if b > a:
            s += (b - a) ** 2
    return math.sqrt(s / len(p))


def loop_var_cvar(p, alpha):
    losses = sorted(-v for v in p)
    n = len(losses)
    var = None
    for i, loss in enumerate(losses):
        if (i + 1) / n > alpha:
            var = loss
            break
    tail = [loss for loss in losses if loss > var]
    cvar = sum(tail) / len(tail) if tail else var
    return var, cvar


def loop_sharpe_ir(p, q, rf=0.0):
    mu = loop_mean(p)
    shr = (mu - rf) / loop_std(p) if mu > rf else 0.0
    ex = [a - b for a, b in zip(p, q)]
    emr = loop_mean(ex)
    ir = emr / loop_std(ex)
    return shr, ir, emr


def loop_turnover(history):
    total = 0.0
    for prev, cur in zip(history, history[1:]):
        for a, b in zip(prev, cur):
            total += abs(b - a)
    return total / (len(history) - 1)


# ---------------------------------------------------------------------------
# tracking objective


def batch_objective(X, y, W, alphas=None, betas=None, slope=None) -> np.ndarray:
    """Objective at every row of W (m x n), evaluated independently of the solver."""
    R = W @ X.T - y[None, :]
    fit = np.einsum("ij,ij->i", R, R)
    absW = np.abs(W)
    if slope is not None:
        return fit + np.sort(absW, axis=1)[:, ::-1] @ np.asarray(slope)
    return fit + absW @ alphas + (W * W) @ (np.asarray(betas) ** 2)


def plane_grid_minimum(X, y, pen, center, half_width=4.0, points=201, rounds=14, shrink=4.0):
    """Iterated dense grids over (w1, w2) with w3 = 1 - w1 - w2, zooming on the best cell."""
    best_w = np.asarray(center, dtype=float)[:2].copy()
    best_f = math.inf
    hw = half_width
    for _ in range(rounds):
        a = np.linspace(best_w[0] - hw, best_w[0] + hw, points)
        b = np.linspace(best_w[1] - hw, best_w[1] + hw, points)
        A, B = np.meshgrid(a, b, indexing="ij")
        W = np.column_stack([A.ravel(), B.ravel(), 1.0 - A.ravel() - B.ravel()])
        f = batch_objective(X, y, W, **pen)
        k = int(np.argmin(f))
        if f[k] <= best_f:
            best_f, best_w = float(f[k]), W[k, :2].copy()
        hw = max(hw / shrink, 2.0 * hw / (points - 1))
    return best_f
