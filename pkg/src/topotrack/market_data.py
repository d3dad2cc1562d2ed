"""Price ingestion, full-history filtering, simple returns and summary statistics."""

from __future__ import annotations

import csv
import datetime as dt
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats as sps

logger = logging.getLogger(__name__)

TRADING_DAYS = 252
MISSING_TOKENS = frozenset({"", "na", "nan", "null", "none", "#n/a", "-"})


class DataError(ValueError):
    """Malformed or inconsistent market data."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PricePanel:
    """Closing prices, one row per date, one column per ticker.

    Missing observations are NaN (absence); every present price is finite and
    positive.
    """

    dates: tuple[str, ...]
    tickers: tuple[str, ...]
    prices: np.ndarray
    index_ticker: str | None = None

    def __post_init__(self):
        prices = _frozen(self.prices).reshape(len(self.dates), len(self.tickers))
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "tickers", tuple(self.tickers))
        if len(set(self.tickers)) != len(self.tickers):
            raise DataError("duplicate ticker")
        for a, b in zip(self.dates, self.dates[1:]):
            if a == b:
                raise DataError(f"duplicate date {a}")
            if a > b:
                raise DataError(f"dates not increasing at {b}")
        present = prices[~np.isnan(prices)]
        if np.any(~np.isfinite(present)) or np.any(present <= 0):
            raise DataError("non-positive price")
        if self.index_ticker is not None and self.index_ticker not in self.tickers:
            raise DataError(f"index ticker {self.index_ticker!r} not in panel")

    @property
    def asset_tickers(self) -> tuple[str, ...]:
        return tuple(t for t in self.tickers if t != self.index_ticker)

    def column(self, ticker: str) -> np.ndarray:
        return self.prices[:, self.tickers.index(ticker)]

    def select(self, tickers) -> "PricePanel":
        cols = [self.tickers.index(t) for t in tickers]
        return PricePanel(self.dates, tuple(tickers), self.prices[:, cols], self.index_ticker)


@dataclass(frozen=True)
class ReturnPanel:
    """Simple daily returns of an index and its n constituents over T days."""

    dates: tuple[str, ...]
    tickers: tuple[str, ...]
    index_returns: np.ndarray
    asset_returns: np.ndarray
    index_ticker: str = "INDEX"

    def __post_init__(self):
        idx = _frozen(self.index_returns).ravel()
        assets = _frozen(self.asset_returns)
        if assets.ndim == 1:
            assets = _frozen(assets[:, None])
        object.__setattr__(self, "index_returns", idx)
        object.__setattr__(self, "asset_returns", assets)
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "tickers", tuple(self.tickers))
        T, n = assets.shape
        if idx.size != T or len(self.dates) != T or len(self.tickers) != n:
            raise DataError("inconsistent return panel dimensions")
        if T < 1 or n < 1:
            raise DataError("return panel needs T >= 1 and n >= 1")
        if np.any(~np.isfinite(assets)) or np.any(~np.isfinite(idx)):
            raise DataError("non-finite return")
        if np.any(assets <= -1) or np.any(idx <= -1):
            raise DataError("return <= -1")

    @property
    def n_days(self) -> int:
        return self.asset_returns.shape[0]

    @property
    def n_assets(self) -> int:
        return self.asset_returns.shape[1]

    def slice(self, start: int, stop: int) -> "ReturnPanel":
        return ReturnPanel(
            self.dates[start:stop],
            self.tickers,
            self.index_returns[start:stop],
            self.asset_returns[start:stop],
            self.index_ticker,
        )


@dataclass(frozen=True)
class DescriptiveStats:
    mean: float
    max: float
    min: float
    std_dev: float
    volatility: float
    skewness: float
    kurtosis: float
    percentile_10: float
    percentile_50: float
    percentile_90: float

    def rows(self):
        return [(k, getattr(self, k)) for k in self.__dataclass_fields__]


def _parse_date(text: str, row: int) -> str:
    try:
        return dt.date.fromisoformat(text.strip()).isoformat()
    except ValueError:
        raise DataError(f"row {row}, column 1: cannot parse date {text!r}") from None


def load_prices(
    source, index_ticker: str | None = None, delimiter: str = ","
) -> PricePanel:
    """Read a delimited price file: ISO date column, then one column per ticker.

    Empty cells and tokens such as ``NA`` are read as missing. Rows are sorted
    by date; duplicated dates and non-positive prices are rejected.
    """
    path = Path(source)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if len(header) < 2:
            raise DataError(f"{path}: header needs a date column and at least one ticker")
        tickers = [h.strip() for h in header[1:]]
        dates, rows = [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise DataError(
                    f"{path}: row {lineno}: expected {len(header)} columns, got {len(rec)}"
                )
            try:
                dates.append(_parse_date(rec[0], lineno))
            except DataError as exc:
                raise DataError(f"{path}: {exc}") from None
            vals = []
            for col, cell in enumerate(rec[1:], start=2):
                token = cell.strip()
                if token.lower() in MISSING_TOKENS:
                    vals.append(math.nan)
                    continue
                try:
                    v = float(token)
                except ValueError:
                    raise DataError(
                        f"{path}: row {lineno}, column {col}: cannot parse {token!r}"
                    ) from None
                if not math.isfinite(v) or v <= 0:
                    raise DataError(
                        f"{path}: row {lineno}, column {col}: non-positive price {token!r}"
                    )
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    order = sorted(range(len(dates)), key=lambda i: dates[i])
    sorted_dates = [dates[i] for i in order]
    for a, b in zip(sorted_dates, sorted_dates[1:]):
        if a == b:
            raise DataError(f"{path}: duplicate date {a}")
    prices = np.array([rows[i] for i in order], dtype=float)
    logger.debug("loaded %d dates x %d tickers from %s", *prices.shape, path)
    return PricePanel(tuple(sorted_dates), tuple(tickers), prices, index_ticker)


def filter_full_history(panel: PricePanel) -> PricePanel:
    """Keep only tickers observed on every date. The index must be complete."""
    complete = ~np.any(np.isnan(panel.prices), axis=0)
    if panel.index_ticker is not None and not complete[panel.tickers.index(panel.index_ticker)]:
        raise DataError(f"index ticker {panel.index_ticker!r} has missing observations")
    keep = [t for t, ok in zip(panel.tickers, complete) if ok]
    dropped = len(panel.tickers) - len(keep)
    if dropped:
        logger.info("dropped %d tickers with missing observations", dropped)
    return panel.select(keep)


def compute_returns(panel: PricePanel) -> ReturnPanel:
    """Simple returns ``(P_t - P_{t-1}) / P_{t-1}``; one fewer row than prices."""
    if len(panel.dates) < 2:
        raise DataError("need at least 2 price dates")
    if np.any(np.isnan(panel.prices)):
        raise DataError("missing prices; run filter_full_history first")
    if panel.index_ticker is None:
        raise DataError("index ticker not set")
    rets = (panel.prices[1:] - panel.prices[:-1]) / panel.prices[:-1]
    col = panel.tickers.index(panel.index_ticker)
    assets = [i for i in range(len(panel.tickers)) if i != col]
    if not assets:
        raise DataError("no constituent tickers")
    return ReturnPanel(
        panel.dates[1:],
        tuple(panel.tickers[i] for i in assets),
        rets[:, col],
        rets[:, assets],
        panel.index_ticker,
    )


def annualized_volatility(series) -> float:
    """Uncentered annualized volatility: sqrt(252 * sum(r^2) / T)."""
    r = np.asarray(series, dtype=float).ravel()
    if r.size == 0:
        raise ValueError("empty series")
    peak = float(np.max(np.abs(r)))
    if peak == 0.0:
        return 0.0
    if 1e-100 < peak < 1e100:
        return math.sqrt(TRADING_DAYS * float(np.dot(r, r)) / r.size)
    # rescale first so squaring neither underflows nor overflows
    u = r / peak
    return peak * math.sqrt(TRADING_DAYS * float(np.dot(u, u)) / r.size)


def describe(series) -> DescriptiveStats:
    r = np.asarray(series, dtype=float).ravel()
    if r.size < 4:
        raise ValueError("series too short for descriptive statistics (need >= 4)")
    if np.ptp(r) == 0.0:
        sd = skew = kurt = 0.0
    else:
        sd = float(np.std(r, ddof=1))
        skew = float(sps.skew(r, bias=False))
        kurt = float(sps.kurtosis(r, fisher=True, bias=False))
    p10, p50, p90 = np.percentile(r, [10, 50, 90])
    return DescriptiveStats(
        mean=float(np.mean(r)),
        max=float(np.max(r)),
        min=float(np.min(r)),
        std_dev=sd,
        volatility=annualized_volatility(r),
        skewness=skew,
        kurtosis=kurt,
        percentile_10=float(p10),
        percentile_50=float(p50),
        percentile_90=float(p90),
    )


def prices_from_returns(returns, start: float = 100.0) -> np.ndarray:
    """Cumulative-product price path whose first row is ``start``."""
    r = np.asarray(returns, dtype=float)
    lead = np.full((1,) + r.shape[1:], start)
    return np.concatenate([lead, start * np.cumprod(1.0 + r, axis=0)], axis=0)
