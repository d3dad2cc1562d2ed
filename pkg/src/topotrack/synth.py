"""Seeded synthetic market: factor-driven assets and a sparse index."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .market_data import PricePanel, ReturnPanel, prices_from_returns


@dataclass(frozen=True)
class SyntheticMarket:
    prices: PricePanel
    returns: ReturnPanel
    true_weights: np.ndarray

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.true_weights)


def business_days(n: int, start: str = "2000-01-03") -> tuple[str, ...]:
    first = np.busday_offset(np.datetime64(start), 0, roll="forward")
    days = np.busday_offset(first, np.arange(n), roll="forward")
    return tuple(str(d) for d in days)


def generate_market(
    n_assets: int = 50,
    k_true: int = 5,
    n_days: int = 1500,
    noise: float = 5e-4,
    seed: int = 0,
    market_vol: float = 0.01,
    idio_vol: tuple[float, float] = (0.005, 0.03),
    index_ticker: str = "INDEX",
) -> SyntheticMarket:
    """One-factor asset returns with heterogeneous idiosyncratic volatility.

    The index return is a fixed combination of ``k_true`` assets (positive
    weights summing to one) plus Gaussian noise of scale ``noise``.
    ``n_days`` counts returns; the price panel has one more row.
    """
    if n_assets < 1 or not 1 <= k_true <= n_assets:
        raise ValueError("need 1 <= k_true <= n_assets")
    if n_days < 2:
        raise ValueError("need at least 2 return days")
    if noise < 0 or market_vol < 0 or idio_vol[0] < 0 or idio_vol[1] < idio_vol[0]:
        raise ValueError("volatility parameters must be nonnegative and ordered")
    rng = np.random.default_rng(seed)
    betas = rng.uniform(0.5, 1.5, n_assets)
    sigmas = rng.uniform(idio_vol[0], idio_vol[1], n_assets)
    factor = rng.normal(2e-4, market_vol, n_days)
    assets = factor[:, None] * betas[None, :] + rng.normal(size=(n_days, n_assets)) * sigmas
    assets = np.clip(assets, -0.5, 0.5)

    support = np.sort(rng.choice(n_assets, size=k_true, replace=False))
    raw = rng.uniform(0.5, 1.5, k_true)
    weights = np.zeros(n_assets)
    weights[support] = raw / raw.sum()
    index = assets @ weights
    if noise > 0:
        index = index + rng.normal(0.0, noise, n_days)

    width = max(2, len(str(n_assets)))
    tickers = tuple(f"A{i:0{width}d}" for i in range(1, n_assets + 1))
    dates = business_days(n_days + 1)
    prices = prices_from_returns(np.column_stack([index, assets]))
    panel = PricePanel(dates, (index_ticker,) + tickers, prices, index_ticker)
    returns = ReturnPanel(dates[1:], tickers, index, assets, index_ticker)
    return SyntheticMarket(panel, returns, weights)
