"""Penalized index-tracking solvers.

Minimizes

    sum_t (R_w,t - R_0,t)^2 + sum_i alpha_i |w_i| + sum_i beta_i^2 w_i^2

subject to sum_i w_i = 1 (weights are otherwise unrestricted), and the SLOPE
variant where the L1 term is replaced by the sorted-L1 norm.

The weighted Elastic-Net is solved by an active-set (feature-sign) method
whose inner step is an exact equality-constrained linear solve, so the KKT
conditions hold to rounding error at termination. SLOPE is solved by ADMM
with the exact sorted-L1 prox (pool-adjacent-violators) until the cluster
structure stabilizes, then polished exactly on that structure.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

logger = logging.getLogger(__name__)

ZERO_CUTOFF = 1e-8


class SolverError(RuntimeError):
    """Raised when a solve cannot produce a usable portfolio."""


@dataclass(frozen=True)
class SolveOptions:
    tolerance: float = 1e-8
    max_iter: int = 100_000
    threshold: float = ZERO_CUTOFF

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not 0 <= self.threshold < 1:
            raise ValueError("threshold must lie in [0, 1)")


@dataclass(frozen=True)
class WeightVector:
    weights: np.ndarray
    threshold: float = ZERO_CUTOFF

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).ravel()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def nonzero(self) -> int:
        return int(np.count_nonzero(self.weights))

    def __len__(self) -> int:
        return self.weights.size


@dataclass(frozen=True)
class SolveDiagnostics:
    objective_value: float
    kkt_residual: float
    iterations: int
    converged: bool
    nonzero: int = 0

    def rows(self):
        return [(k, getattr(self, k)) for k in self.__dataclass_fields__]


@dataclass(frozen=True)
class _Coefficients:
    alphas: np.ndarray
    betas: np.ndarray
    slope_sequence: np.ndarray | None = None
    kind: str = "custom"


@dataclass(frozen=True)
class TrackingProblem:
    """Asset returns (T x n), index returns (T,), and a PenaltySpec.

    ``penalty`` is anything exposing ``alphas``, ``betas``, ``kind`` and
    ``slope_sequence`` (e.g. :class:`topotrack.penalty.PenaltySpec`).
    """

    asset_returns: np.ndarray
    index_returns: np.ndarray
    penalty: object = field(default=None)

    def __post_init__(self):
        X = np.array(self.asset_returns, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.array(self.index_returns, dtype=float).ravel()
        if X.shape[0] != y.size:
            raise ValueError(
                f"dimension mismatch: {X.shape[0]} asset rows vs {y.size} index rows"
            )
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError("tracking problem needs T >= 1 and n >= 1")
        n = X.shape[1]
        pen = self.penalty
        if pen is None:
            pen = _Coefficients(np.zeros(n), np.zeros(n), None, "TE")
        for name in ("alphas", "betas"):
            if np.asarray(getattr(pen, name)).size != n:
                raise ValueError(f"penalty {name} length does not match {n} assets")
        seq = getattr(pen, "slope_sequence", None)
        if seq is not None and np.asarray(seq).size != n:
            raise ValueError("slope sequence length does not match asset count")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "asset_returns", X)
        object.__setattr__(self, "index_returns", y)
        object.__setattr__(self, "penalty", pen)

    @property
    def n_assets(self) -> int:
        return self.asset_returns.shape[1]

    @property
    def alphas(self) -> np.ndarray:
        return np.asarray(self.penalty.alphas, dtype=float)

    @property
    def betas(self) -> np.ndarray:
        return np.asarray(self.penalty.betas, dtype=float)

    @property
    def is_slope(self) -> bool:
        return getattr(self.penalty, "kind", None) == "SLOPE"

    @property
    def slope_sequence(self) -> np.ndarray:
        seq = getattr(self.penalty, "slope_sequence", None)
        if seq is None:
            raise ValueError("penalty has no slope sequence")
        return np.asarray(seq, dtype=float)

    def with_penalty(self, penalty) -> "TrackingProblem":
        return TrackingProblem(self.asset_returns, self.index_returns, penalty)


def sorted_l1(weights, sequence) -> float:
    """sum_i lambda_i |w|_(i) with |w| sorted in decreasing order."""
    a = np.sort(np.abs(np.asarray(weights, dtype=float)))[::-1]
    return float(np.dot(np.asarray(sequence, dtype=float), a))


def objective_value(problem: TrackingProblem, weights) -> float:
    """Tracking objective (SLOPE objective when the penalty kind is SLOPE)."""
    w = np.asarray(weights, dtype=float).ravel()
    if w.size != problem.n_assets:
        raise ValueError("weight vector length does not match asset count")
    resid = problem.asset_returns @ w - problem.index_returns
    fit = float(np.dot(resid, resid))
    if problem.is_slope:
        return fit + sorted_l1(w, problem.slope_sequence)
    b = problem.betas
    return fit + float(np.dot(problem.alphas, np.abs(w))) + float(np.dot(b * b, w * w))


def apply_threshold(weights, threshold: float = ZERO_CUTOFF) -> WeightVector:
    """Zero out entries with |w_i| < threshold and rescale the rest to sum to 1."""
    w = np.array(weights, dtype=float).ravel()
    small = np.abs(w) < threshold
    if np.all(small):
        raise SolverError("all weights fall below the zero threshold")
    if np.any(small):
        w[small] = 0.0
        w = w / w.sum()
    return WeightVector(w, threshold)


def _quadratic_terms(problem: TrackingProblem, ridge: np.ndarray):
    X, y = problem.asset_returns, problem.index_returns
    Q = 2.0 * (X.T @ X) + 2.0 * np.diag(ridge)
    c = -2.0 * (X.T @ y)
    return Q, c


def _nu_estimate(g: np.ndarray, alphas: np.ndarray, w: np.ndarray) -> float:
    act = w != 0
    if not np.any(act):
        return float(-np.median(g))
    return float(-np.mean(g[act] + alphas[act] * np.sign(w[act])))


def en_kkt_residual(problem: TrackingProblem, weights, nu: float | None = None) -> float:
    """Max-norm violation of the first-order optimality conditions (L1/L2 kinds)."""
    w = np.asarray(weights, dtype=float).ravel()
    b = problem.betas
    Q, c = _quadratic_terms(problem, b * b)
    alphas = problem.alphas
    g = Q @ w + c
    if nu is None:
        nu = _nu_estimate(g, alphas, w)
    act = w != 0
    r = np.zeros_like(w)
    r[act] = np.abs(g[act] + nu + alphas[act] * np.sign(w[act]))
    r[~act] = np.maximum(0.0, np.abs(g[~act] + nu) - alphas[~act])
    return float(max(r.max(initial=0.0), abs(w.sum() - 1.0)))


def _solve_face(Q, c, alphas, active, signs):
    """Equality-constrained minimizer on an orthant face; returns (x_active, nu)."""
    k = active.size
    K = np.zeros((k + 1, k + 1))
    K[:k, :k] = Q[np.ix_(active, active)]
    K[:k, k] = 1.0
    K[k, :k] = 1.0
    rhs = np.empty(k + 1)
    rhs[:k] = -(c[active] + alphas[active] * signs)
    rhs[k] = 1.0
    try:
        sol = np.linalg.solve(K, rhs)
        if not np.all(np.isfinite(sol)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return sol[:k], float(sol[k])


def _min_norm_constrained_ls(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Minimum-norm minimizer of ||Xw - y||^2 over {sum w = 1}."""
    n = X.shape[1]
    base = np.full(n, 1.0 / n)
    # orthonormal basis of the sum-zero subspace
    basis = np.linalg.svd(np.ones((1, n)))[2][1:].T
    z = np.linalg.lstsq(X @ basis, y - X @ base, rcond=None)[0]
    return base + basis @ z


def _feature_sign(problem, Q, c, alphas, w0, options):
    n = problem.n_assets
    w = w0.copy()
    f_of = lambda v: objective_value(problem, v)
    iters = 0
    best_w, best_f = w.copy(), f_of(w)
    scale = max(1.0, abs(best_f))
    while iters < options.max_iter:
        iters += 1
        active = np.flatnonzero(w)
        signs = np.sign(w[active])
        x, nu = _solve_face(Q, c, alphas, active, signs)
        cur = w[active]
        direction = x - cur
        ts = []
        with np.errstate(divide="ignore", invalid="ignore"):
            t_cross = -cur / direction
        for i in np.flatnonzero((cur != 0) & (np.sign(x) != np.sign(cur))):
            t = t_cross[i]
            if 0.0 < t < 1.0:
                ts.append((t, i))
        ts.sort()
        cand_best = (f_of(_place(n, active, x)), 1.0, None)
        for t, i in ts:
            trial = cur + t * direction
            trial[i] = 0.0
            f_t = f_of(_place(n, active, trial))
            if f_t < cand_best[0] - 1e-15 * scale:
                cand_best = (f_t, t, i)
        f_new, t_best, zeroed = cand_best
        if zeroed is None:
            new_active = x
        else:
            new_active = cur + t_best * direction
            new_active[zeroed] = 0.0
        w = _place(n, active, new_active)
        if f_new < best_f:
            best_f, best_w = f_new, w.copy()
        if zeroed is not None or np.any(np.sign(x) != signs):
            continue
        # nonzero coordinates are optimal on this face; inspect the zeros
        g = Q @ w + c
        inactive = np.flatnonzero(w == 0)
        if inactive.size == 0:
            return w, nu, iters, True
        viol = np.abs(g[inactive] + nu) - alphas[inactive]
        j = int(np.argmax(viol))
        if viol[j] <= 0.25 * options.tolerance:
            return w, nu, iters, True
        i_new = inactive[j]
        # enter with the sign that decreases the objective; value starts at 0
        w = _enter(w, i_new, -np.sign(g[i_new] + nu))
    return best_w, None, iters, False


def _enter(w: np.ndarray, i: int, sign: float) -> np.ndarray:
    # a tiny signed seed marks the coordinate active without moving the iterate
    # measurably; the next face solve sets its value exactly
    out = w.copy()
    out[i] = sign * 1e-300
    return out


def _place(n, active, values):
    out = np.zeros(n)
    out[active] = values
    return out


def solve_tracking(
    problem: TrackingProblem,
    options: SolveOptions | None = None,
    warm_start=None,
) -> tuple[WeightVector, SolveDiagnostics]:
    """Solve the weighted Elastic-Net tracking problem with the budget constraint."""
    options = options or SolveOptions()
    if problem.is_slope:
        raise ValueError("use solve_slope for SLOPE penalties")
    n = problem.n_assets
    alphas, betas = problem.alphas, problem.betas
    if np.any(alphas < 0) or np.any(betas < 0):
        raise ValueError("penalty coefficients must be nonnegative")
    if n == 1:
        w = np.ones(1)
        return WeightVector(w, options.threshold), SolveDiagnostics(
            objective_value(problem, w), 0.0, 0, True, 1
        )

    Q, c = _quadratic_terms(problem, betas * betas)
    if not np.any(alphas) and not np.any(betas):
        raw = _min_norm_constrained_ls(problem.asset_returns, problem.index_returns)
        iters, ok = 1, True
    else:
        w0 = _feasible_start(warm_start, n)
        raw, _, iters, ok = _feature_sign(problem, Q, c, alphas, w0, options)
    kkt = en_kkt_residual(problem, raw)
    converged = bool(ok and kkt <= options.tolerance)
    if not converged:
        logger.warning("weighted EN solve not converged: kkt=%.3e iters=%d", kkt, iters)
    wv = apply_threshold(raw, options.threshold)
    diag = SolveDiagnostics(objective_value(problem, wv.weights), kkt, iters, converged, wv.nonzero)
    return wv, diag


def _feasible_start(warm_start, n: int) -> np.ndarray:
    if warm_start is not None:
        w0 = np.array(getattr(warm_start, "weights", warm_start), dtype=float).ravel()
        if w0.size == n and np.all(np.isfinite(w0)) and abs(w0.sum() - 1.0) < 1e-6 and np.any(w0):
            return w0 / w0.sum()
    return np.full(n, 1.0 / n)


# --------------------------------------------------------------------------- SLOPE


def _pava_nonincreasing(z: np.ndarray) -> np.ndarray:
    """Least-squares nonincreasing fit of z (pool adjacent violators)."""
    sums: list[float] = []
    counts: list[int] = []
    for v in z.tolist():
        sums.append(v)
        counts.append(1)
        while len(sums) > 1 and sums[-2] * counts[-1] <= sums[-1] * counts[-2]:
            s, k = sums.pop(), counts.pop()
            sums[-1] += s
            counts[-1] += k
    out = np.empty(z.size)
    pos = 0
    for s, k in zip(sums, counts):
        out[pos : pos + k] = s / k
        pos += k
    return out


def prox_sorted_l1(v, sequence) -> np.ndarray:
    """Exact prox of the sorted-L1 norm with a nonincreasing nonnegative sequence."""
    v = np.asarray(v, dtype=float)
    lam = np.asarray(sequence, dtype=float)
    a = np.abs(v)
    order = np.argsort(-a, kind="stable")
    fitted = np.maximum(_pava_nonincreasing(a[order] - lam), 0.0)
    out = np.empty_like(a)
    out[order] = fitted
    return np.sign(v) * out


def _clusters(w: np.ndarray):
    """Nonzero magnitude clusters (largest first) and the zero set."""
    mags = np.abs(w)
    levels = np.unique(mags[mags > 0])[::-1]
    groups = [np.flatnonzero(mags == m) for m in levels]
    zero = np.flatnonzero(mags == 0)
    return groups, zero


def _majorization_gap(u: np.ndarray, lam_block: np.ndarray, equal: bool) -> float:
    u = np.sort(u)[::-1]
    diff = np.cumsum(u) - np.cumsum(lam_block)
    gap = float(np.max(diff[:-1], initial=0.0)) if diff.size > 1 else 0.0
    gap = max(gap, 0.0)
    if equal:
        return max(gap, abs(float(diff[-1])))
    return max(gap, float(diff[-1]), 0.0)


def _slope_residual_at(g, lam, w, groups, zero, nu) -> float:
    v = -(g + nu)
    gap = 0.0
    rank = 0
    for grp in groups:
        block = lam[rank : rank + grp.size]
        gap = max(gap, _majorization_gap(np.sign(w[grp]) * v[grp], block, equal=True))
        rank += grp.size
    if zero.size:
        gap = max(gap, _majorization_gap(np.abs(v[zero]), lam[rank:], equal=False))
    return gap


def slope_kkt_residual(problem: TrackingProblem, weights) -> float:
    """Distance-style certificate that -(grad + nu) lies in the sorted-L1 subdifferential."""
    w = np.asarray(weights, dtype=float).ravel()
    lam = problem.slope_sequence
    Q, c = _quadratic_terms(problem, np.zeros(problem.n_assets))
    g = Q @ w + c
    groups, zero = _clusters(w)
    num = den = 0.0
    rank = 0
    for grp in groups:
        s = np.sign(w[grp])
        S = float(s.sum())
        num += S * (float(np.dot(s, g[grp])) + float(lam[rank : rank + grp.size].sum()))
        den += S * S
        rank += grp.size
    f = lambda nu: _slope_residual_at(g, lam, w, groups, zero, nu)
    cands = []
    if den > 0:
        nu0 = -num / den
        cands.append(f(nu0))
        span = 1e-6 * (1.0 + abs(nu0))
        res = minimize_scalar(f, bracket=(nu0 - span, nu0 + span), options={"xtol": 1e-14})
        cands.append(float(res.fun))
    else:
        res = minimize_scalar(f, options={"xtol": 1e-14})
        cands.append(float(res.fun))
    return float(max(min(cands), abs(w.sum() - 1.0)))


def _polish_slope(Q, c, lam, w):
    """Exact minimizer for the cluster/sign structure of w, or None if inconsistent."""
    groups, _ = _clusters(w)
    if not groups:
        return None
    n, K = w.size, len(groups)
    U = np.zeros((n, K))
    Lam = np.empty(K)
    rank = 0
    for k, grp in enumerate(groups):
        U[grp, k] = np.sign(w[grp])
        Lam[k] = lam[rank : rank + grp.size].sum()
        rank += grp.size
    ones = U.sum(axis=0)
    if not np.any(ones):
        return None
    KKT = np.zeros((K + 1, K + 1))
    KKT[:K, :K] = U.T @ Q @ U
    KKT[:K, K] = ones
    KKT[K, :K] = ones
    rhs = np.concatenate([-(U.T @ c + Lam), [1.0]])
    try:
        sol = np.linalg.solve(KKT, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(KKT, rhs, rcond=None)[0]
    m = sol[:K]
    if not np.all(np.isfinite(m)) or np.any(m <= 0) or np.any(np.diff(m) > 0):
        return None
    return U @ m


def solve_slope(
    problem: TrackingProblem,
    options: SolveOptions | None = None,
    warm_start=None,
) -> tuple[WeightVector, SolveDiagnostics]:
    """Sorted-L1 penalized tracking with the budget constraint."""
    options = options or SolveOptions()
    lam = problem.slope_sequence
    n = problem.n_assets
    if np.any(np.diff(lam) > 0) or np.any(lam < 0):
        raise ValueError("slope sequence must be nonnegative and non-increasing")
    if n == 1:
        w = np.ones(1)
        return WeightVector(w, options.threshold), SolveDiagnostics(
            objective_value(problem, w), 0.0, 0, True, 1
        )
    Q, c = _quadratic_terms(problem, np.zeros(n))
    if not np.any(lam):
        raw = _min_norm_constrained_ls(problem.asset_returns, problem.index_returns)
        kkt = slope_kkt_residual(problem, raw)
        return _finish_slope(problem, raw, kkt, 1, kkt <= options.tolerance, options)

    evals = np.linalg.eigvalsh(Q)
    lo, hi = max(evals[0], 1e-12 * evals[-1]), evals[-1]
    rho = math.sqrt(lo * hi)
    u = _feasible_start(warm_start, n)
    z = np.zeros(n)
    ones = np.ones(n)

    def factor(rho):
        M = np.linalg.inv(Q + rho * np.eye(n))
        M1 = M @ ones
        return M, M1, float(ones @ M1)

    M, M1, s1 = factor(rho)
    best = (math.inf, u, False)
    check_every = 25
    it = 0
    for it in range(1, options.max_iter + 1):
        b = -c + rho * (u - z)
        Mb = M @ b
        nu = (float(ones @ Mb) - 1.0) / s1
        w = Mb - nu * M1
        u_prev = u
        u = prox_sorted_l1(w + z, lam / rho)
        z = z + w - u
        if it % check_every:
            continue
        cand = _polish_slope(Q, c, lam, u)
        if cand is not None:
            kkt = slope_kkt_residual(problem, cand)
            if kkt <= options.tolerance:
                return _finish_slope(problem, cand, kkt, it, True, options)
            f = objective_value(problem, cand)
            if f < best[0]:
                best = (f, cand, False)
        # residual balancing keeps primal and dual progress comparable
        r_pri = np.linalg.norm(w - u)
        r_dual = rho * np.linalg.norm(u - u_prev)
        if r_pri > 10 * r_dual:
            rho *= 2.0
            z /= 2.0
            M, M1, s1 = factor(rho)
        elif r_dual > 10 * r_pri:
            rho /= 2.0
            z *= 2.0
            M, M1, s1 = factor(rho)
        check_every = min(200, check_every + 5)

    raw = best[1] if math.isfinite(best[0]) else u / u.sum()
    kkt = slope_kkt_residual(problem, raw)
    logger.warning("SLOPE solve not converged: kkt=%.3e", kkt)
    return _finish_slope(problem, raw, kkt, it, False, options)


def _finish_slope(problem, raw, kkt, iters, converged, options):
    wv = apply_threshold(raw, options.threshold)
    return wv, SolveDiagnostics(
        objective_value(problem, wv.weights), float(kkt), int(iters), bool(converged), wv.nonzero
    )


def solve(problem: TrackingProblem, options: SolveOptions | None = None, warm_start=None):
    """Dispatch to the SLOPE or weighted Elastic-Net solver by penalty kind."""
    if problem.is_slope:
        return solve_slope(problem, options, warm_start)
    return solve_tracking(problem, options, warm_start)
