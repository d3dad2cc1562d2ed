"""Out-of-sample performance measures for tracking portfolios."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .market_data import annualized_volatility

__all__ = [
    "MetricSuite",
    "tracking_error",
    "correlation",
    "annualized_volatility",
    "downside_deviation",
    "var_cvar",
    "sharpe_ir",
    "turnover",
    "metric_suite",
    "METRIC_LABELS",
]


def _pair(portfolio, index) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(portfolio, dtype=float).ravel()
    q = np.asarray(index, dtype=float).ravel()
    if p.size != q.size:
        raise ValueError(f"length mismatch: {p.size} vs {q.size}")
    return p, q


def tracking_error(portfolio, index) -> float:
    """sqrt(sum (R_w - R_0)^2 / (N - 1))."""
    p, q = _pair(portfolio, index)
    if p.size < 2:
        raise ValueError("tracking error needs at least 2 observations")
    d = p - q
    return math.sqrt(float(np.dot(d, d)) / (d.size - 1))


def correlation(portfolio, index) -> float:
    """Pearson correlation; 0 when either series is constant."""
    p, q = _pair(portfolio, index)
    a = p - p.mean()
    b = q - q.mean()
    sxy = float(np.dot(a, b))
    sxx = float(np.dot(a, a))
    syy = float(np.dot(b, b))
    if sxx == 0.0 or syy == 0.0:
        return 0.0
    return max(-1.0, min(1.0, sxy / math.sqrt(sxx * syy)))


def downside_deviation(portfolio, index) -> float:
    """RMS of shortfalls (index above portfolio) with denominator N."""
    p, q = _pair(portfolio, index)
    if p.size < 1:
        raise ValueError("downside deviation needs at least 1 observation")
    short = np.maximum(q - p, 0.0)
    return math.sqrt(float(np.dot(short, short)) / short.size)


def var_cvar(portfolio, alpha: float = 0.95) -> tuple[float, float]:
    """Empirical VaR and CVaR of the loss -R_w at level alpha.

    VaR is the smallest loss r with empirical CDF F(r) > alpha; CVaR is the
    mean of losses strictly above VaR, or VaR when no loss exceeds it.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    losses = np.sort(-np.asarray(portfolio, dtype=float).ravel())
    n = losses.size
    if n < 1:
        raise ValueError("VaR needs at least 1 observation")
    cdf = np.arange(1, n + 1) / n
    var = float(losses[int(np.argmax(cdf > alpha))])
    tail = losses[losses > var]
    cvar = float(tail.mean()) if tail.size else var
    return var, cvar


def sharpe_ir(portfolio, index, risk_free: float = 0.0) -> tuple[float, float, float]:
    """(SHR, IR, EMR).

    SHR is (mu - R_f)/sigma when mu > R_f and 0 otherwise. IR is EMR over the
    standard deviation of the excess return; 0/0 is reported as 0.
    """
    p, q = _pair(portfolio, index)
    if p.size < 2:
        raise ValueError("Sharpe/IR need at least 2 observations")
    mu = float(p.mean())
    sigma = float(p.std(ddof=1))
    if mu > risk_free:
        if sigma == 0.0:
            raise ValueError("zero volatility with mean above the risk-free rate")
        shr = (mu - risk_free) / sigma
    else:
        shr = 0.0
    excess = p - q
    emr = float(excess.mean())
    sd_e = float(excess.std(ddof=1)) if np.ptp(excess) > 0 else 0.0
    if sd_e == 0.0:
        if emr != 0.0:
            raise ValueError("nonzero excess mean with zero excess volatility")
        ir = 0.0
    else:
        ir = emr / sd_e
    return shr, ir, emr


def turnover(weight_history) -> float:
    """Mean L1 distance between consecutive weight vectors (M rebalances)."""
    W = [np.asarray(getattr(w, "weights", w), dtype=float).ravel() for w in weight_history]
    if len(W) < 2:
        raise ValueError("turnover needs at least 2 weight vectors")
    n = W[0].size
    if any(w.size != n for w in W):
        raise ValueError("inconsistent weight vector dimensions")
    W = np.vstack(W)
    return float(np.abs(np.diff(W, axis=0)).sum() / (W.shape[0] - 1))


@dataclass(frozen=True)
class MetricSuite:
    terror: float
    correlation: float
    volatility: float
    dd: float
    var_alpha: float
    cvar_alpha: float
    shr: float
    ir: float
    emr: float
    tr: float
    mean_assets: float

    @classmethod
    def names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def as_dict(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in self.names()}

    @classmethod
    def mean(cls, suites) -> "MetricSuite":
        suites = list(suites)
        return cls(**{k: float(np.mean([getattr(s, k) for s in suites])) for k in cls.names()})


METRIC_LABELS = {
    "terror": "TError",
    "correlation": "Correlation",
    "volatility": "Volatility",
    "dd": "DD",
    "var_alpha": "VaR",
    "cvar_alpha": "CVaR",
    "shr": "SHR",
    "ir": "IR",
    "emr": "EMR",
    "tr": "TR",
    "mean_assets": "Assets",
}


def metric_suite(
    portfolio,
    index,
    weight_history=None,
    alpha: float = 0.95,
    risk_free: float = 0.0,
    mean_assets: float | None = None,
) -> MetricSuite:
    p, q = _pair(portfolio, index)
    var, cvar = var_cvar(p, alpha)
    shr, ir, emr = sharpe_ir(p, q, risk_free)
    history = list(weight_history or [])
    tr = turnover(history) if len(history) >= 2 else 0.0
    if mean_assets is None:
        counts = [np.count_nonzero(getattr(w, "weights", w)) for w in history]
        mean_assets = float(np.mean(counts)) if counts else math.nan
    return MetricSuite(
        terror=tracking_error(p, q),
        correlation=correlation(p, q),
        volatility=annualized_volatility(p),
        dd=downside_deviation(p, q),
        var_alpha=var,
        cvar_alpha=cvar,
        shr=shr,
        ir=ir,
        emr=emr,
        tr=tr,
        mean_assets=float(mean_assets),
    )
