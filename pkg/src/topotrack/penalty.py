"""Per-asset regularization coefficients.

TDA kinds take the L1 norm of mean persistence landscapes over overlapping
sub-series of each asset's returns; the benchmark kinds use scaled
volatility, adaptive Elastic-Net pilot weights, or a SLOPE sequence.
"""

from __future__ import annotations

import hashlib
import logging
import pickle
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import tda
from .market_data import ReturnPanel, annualized_volatility
from .solver import SolveOptions, TrackingProblem, solve

logger = logging.getLogger(__name__)

KINDS = ("TE", "TDAEN12", "TDAEN11", "TDA_L1", "VolEN", "Vol_L1", "AdaptiveEN", "SLOPE")
TDA_KINDS = ("TDAEN12", "TDAEN11", "TDA_L1")
VOL_KINDS = ("VolEN", "Vol_L1")
_ALIASES = {"EN": "AdaptiveEN", "TDAL1": "TDA_L1", "VolL1": "Vol_L1", "TDAl1": "TDA_L1"}

ADAPTIVE_FLOOR = 1e-6
ASSET_BAND = 0.10


def canonical_kind(kind: str) -> str:
    k = _ALIASES.get(kind, kind)
    if k not in KINDS:
        raise ValueError(f"unknown model kind {kind!r}; choose from {', '.join(KINDS)}")
    return k


@dataclass(frozen=True)
class PenaltySpec:
    alphas: np.ndarray
    betas: np.ndarray
    kind: str
    slope_sequence: np.ndarray | None = None
    tickers: tuple[str, ...] | None = None

    def __post_init__(self):
        kind = canonical_kind(self.kind)
        a = np.array(self.alphas, dtype=float).ravel()
        b = np.array(self.betas, dtype=float).ravel()
        if a.shape != b.shape:
            raise ValueError("alphas and betas differ in length")
        if np.any(~np.isfinite(a)) or np.any(~np.isfinite(b)):
            raise ValueError("penalty coefficients must be finite")
        if np.any(a < 0) or np.any(b < 0):
            raise ValueError("penalty coefficients must be nonnegative")
        if kind == "TE" and (np.any(a) or np.any(b)):
            raise ValueError("TE carries no penalty")
        if kind == "TDAEN11" and not np.array_equal(a, b):
            raise ValueError("TDAEN11 requires betas == alphas")
        if kind in ("TDA_L1", "Vol_L1", "SLOPE") and np.any(b):
            raise ValueError(f"{kind} requires zero betas")
        seq = self.slope_sequence
        if kind == "SLOPE":
            if seq is None:
                raise ValueError("SLOPE requires a slope sequence")
            seq = np.array(seq, dtype=float).ravel()
            if seq.size != a.size or np.any(seq < 0) or np.any(np.diff(seq) > 0):
                raise ValueError("slope sequence must be nonnegative, non-increasing, length n")
            seq.setflags(write=False)
        elif seq is not None:
            raise ValueError("slope sequence only applies to SLOPE")
        for arr in (a, b):
            arr.setflags(write=False)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "alphas", a)
        object.__setattr__(self, "betas", b)
        object.__setattr__(self, "slope_sequence", seq)
        if self.tickers is not None:
            object.__setattr__(self, "tickers", tuple(self.tickers))
            if len(self.tickers) != a.size:
                raise ValueError("ticker list length does not match coefficients")

    @property
    def n(self) -> int:
        return self.alphas.size

    @classmethod
    def zero(cls, n: int, tickers=None) -> "PenaltySpec":
        return cls(np.zeros(n), np.zeros(n), "TE", tickers=tickers)

    def rows(self):
        """(label, alpha, beta) rows; SLOPE rows carry the rank-ordered sequence."""
        if self.kind == "SLOPE":
            return [(f"rank{i + 1}", float(v), 0.0) for i, v in enumerate(self.slope_sequence)]
        names = self.tickers or tuple(f"asset{i + 1}" for i in range(self.n))
        return [(t, float(a), float(b)) for t, a, b in zip(names, self.alphas, self.betas)]


@dataclass(frozen=True)
class SubSeriesPlan:
    """Overlapping sub-series layout over ``21 * months`` trading days."""

    months: int = 6
    sub_len: int = 42
    step: int = 21

    def __post_init__(self):
        if self.months < 1 or self.sub_len < 1 or self.step < 1:
            raise ValueError("sub-series plan entries must be positive")
        if self.step >= self.sub_len:
            raise ValueError("overlap step must be shorter than the sub-series")
        if self.sub_len > self.days:
            raise ValueError("sub-series longer than the learning window")
        if (self.days - self.sub_len) % self.step:
            raise ValueError("(days - sub_len) must be divisible by step")

    @property
    def days(self) -> int:
        return 21 * self.months

    @property
    def count(self) -> int:
        return (self.days - self.sub_len) // self.step + 1

    def starts(self) -> range:
        return range(0, self.count * self.step, self.step)


class LandscapeCache:
    """Memo of (dim-0, dim-1) landscapes per asset sub-series.

    Keys combine the asset id and absolute start index with the embedding
    settings and a digest of the sub-series values, so a hit always equals a
    fresh computation. Reads are lock-free; inserts are serialized.
    """

    def __init__(self):
        self._entries: dict = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def __len__(self) -> int:
        return len(self._entries)

    @staticmethod
    def key(asset_id, start: int, values: np.ndarray, embed: tuple[int, int]):
        digest = hashlib.blake2b(np.ascontiguousarray(values, dtype=float).tobytes(), digest_size=16)
        return (asset_id, int(start), int(embed[0]), int(embed[1]), values.size, digest.hexdigest())

    def get(self, key):
        return self._entries.get(key)

    def put(self, key, value) -> None:
        with self._lock:
            self._entries.setdefault(key, value)

    def save(self, path) -> None:
        with self._lock:
            data = dict(self._entries)
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            pickle.dump(data, fh, protocol=pickle.HIGHEST_PROTOCOL)

    @classmethod
    def load(cls, path) -> "LandscapeCache":
        cache = cls()
        p = Path(path)
        if p.exists():
            with p.open("rb") as fh:
                cache._entries.update(pickle.load(fh))
        return cache


def subseries_landscapes(
    values: np.ndarray, embed: tuple[int, int] = (3, 1)
) -> tuple[tda.PersistenceLandscape, tda.PersistenceLandscape]:
    cloud = tda.takens_embed(values, d=embed[0], tau=embed[1])
    diagram = tda.rips_persistence(cloud, tda.FiltrationSpec(max_homology_dim=1))
    return tda.landscape_from_diagram(diagram, 0), tda.landscape_from_diagram(diagram, 1)


def tda_coefficients(
    returns,
    plan: SubSeriesPlan | None = None,
    embed: tuple[int, int] = (3, 1),
    cache: LandscapeCache | None = None,
    asset_id=None,
    offset: int = 0,
    p: float = 1.0,
    k_max: int = 1,
) -> tuple[float, float]:
    """(alpha, beta) for one asset: norms of its mean dim-0 / dim-1 landscapes.

    ``offset`` is the absolute position of ``returns[0]`` in the full series
    and only matters for cache keys.
    """
    plan = plan or SubSeriesPlan()
    r = np.asarray(returns, dtype=float).ravel()
    if r.size != plan.days:
        raise ValueError(f"expected {plan.days} returns for the learning window, got {r.size}")
    zero, one = [], []
    for start in plan.starts():
        sub = r[start : start + plan.sub_len]
        key = LandscapeCache.key(asset_id, offset + start, sub, embed) if cache is not None else None
        pair = cache.get(key) if cache is not None else None
        if pair is None:
            pair = subseries_landscapes(sub, embed)
            if cache is not None:
                cache.misses += 1
                cache.put(key, pair)
        elif cache is not None:
            cache.hits += 1
        zero.append(pair[0])
        one.append(pair[1])
    alpha = tda.landscape_norm(tda.mean_landscape(zero), p=p, k_max=k_max).value
    beta = tda.landscape_norm(tda.mean_landscape(one), p=p, k_max=k_max).value
    return alpha, beta


def tda_norms(
    panel: ReturnPanel,
    plan: SubSeriesPlan | None = None,
    embed: tuple[int, int] = (3, 1),
    cache: LandscapeCache | None = None,
    offset: int = 0,
    p: float = 1.0,
    k_max: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Dim-0 and dim-1 norms for every asset over the last ``plan.days`` rows."""
    plan = plan or SubSeriesPlan()
    if panel.n_days < plan.days:
        raise ValueError(f"panel has {panel.n_days} days, learning window needs {plan.days}")
    lead = panel.n_days - plan.days
    X = panel.asset_returns[lead:]
    out = np.array(
        [
            tda_coefficients(X[:, i], plan, embed, cache, panel.tickers[i], offset + lead, p, k_max)
            for i in range(panel.n_assets)
        ]
    ).reshape(-1, 2)
    return out[:, 0], out[:, 1]


def build_tda_spec(
    panel: ReturnPanel,
    plan: SubSeriesPlan | None = None,
    kind: str = "TDAEN12",
    cache: LandscapeCache | None = None,
    offset: int = 0,
    embed: tuple[int, int] = (3, 1),
    p: float = 1.0,
    k_max: int = 1,
    norms: tuple[np.ndarray, np.ndarray] | None = None,
) -> PenaltySpec:
    kind = canonical_kind(kind)
    if kind not in TDA_KINDS:
        raise ValueError(f"{kind} is not a TDA kind")
    a0, a1 = norms if norms is not None else tda_norms(panel, plan, embed, cache, offset, p, k_max)
    if kind == "TDAEN12":
        alphas, betas = a0, a1
    elif kind == "TDAEN11":
        alphas, betas = a0, a0.copy()
    else:
        alphas, betas = a0, np.zeros_like(a0)
    return PenaltySpec(alphas, betas, kind, tickers=panel.tickers)


def asset_volatilities(panel: ReturnPanel) -> np.ndarray:
    return np.array([annualized_volatility(panel.asset_returns[:, i]) for i in range(panel.n_assets)])


def vol_spec(panel: ReturnPanel, kind: str, phi: float, psi: float = 0.0, vols=None) -> PenaltySpec:
    """alpha_i = phi * Vol_i; beta_i = psi * Vol_i (VolEN) or 0 (Vol_L1)."""
    kind = canonical_kind(kind)
    if kind not in VOL_KINDS:
        raise ValueError(f"{kind} is not a volatility kind")
    if phi < 0 or psi < 0:
        raise ValueError("phi and psi must be nonnegative")
    v = asset_volatilities(panel) if vols is None else np.asarray(vols, dtype=float)
    betas = psi * v if kind == "VolEN" else np.zeros_like(v)
    return PenaltySpec(phi * v, betas, kind, tickers=panel.tickers)


def adaptive_en_spec(
    unpenalized_weights,
    lambda1: float,
    lambda2: float,
    floor: float = ADAPTIVE_FLOOR,
    tickers=None,
) -> PenaltySpec:
    """alpha_i = lambda1 / max(|w_i|, floor); beta_i = lambda2 for every asset."""
    if lambda1 < 0 or lambda2 < 0:
        raise ValueError("lambda1 and lambda2 must be nonnegative")
    w = np.abs(np.asarray(getattr(unpenalized_weights, "weights", unpenalized_weights), dtype=float))
    alphas = lambda1 / np.maximum(w, floor)
    return PenaltySpec(alphas, np.full(w.size, float(lambda2)), "AdaptiveEN", tickers=tickers)


def linear_shape(n: int) -> np.ndarray:
    return (n - np.arange(n)) / n


def slope_sequence(
    n: int, lam: float, shape: Callable[[int], np.ndarray] | str = "linear"
) -> np.ndarray:
    """Non-increasing SLOPE sequence ``lam * shape(n)``; linear shape by default."""
    if n < 1:
        raise ValueError("n must be positive")
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    gen = linear_shape if shape == "linear" else shape
    if not callable(gen):
        raise ValueError(f"unknown SLOPE shape {shape!r}")
    base = np.asarray(gen(n), dtype=float)
    if base.size != n or np.any(base < 0) or np.any(np.diff(base) > 0):
        raise ValueError("SLOPE shape must be nonnegative and non-increasing")
    return lam * base


def slope_spec(n: int, lam: float, shape="linear", tickers=None) -> PenaltySpec:
    seq = slope_sequence(n, lam, shape)
    return PenaltySpec(np.zeros(n), np.zeros(n), "SLOPE", slope_sequence=seq, tickers=tickers)


@dataclass(frozen=True)
class GridResult:
    point: tuple
    nonzero: int
    tracking_error: float
    in_band: bool


def asset_band(target: int, band: float = ASSET_BAND) -> tuple[int, int]:
    half = int(round(band * target))
    return target - half, target + half


def _in_sample_te(X, y, w) -> float:
    d = X @ w - y
    return float(np.sqrt(np.dot(d, d) / max(d.size - 1, 1)))


def grid_search(
    asset_returns,
    index_returns,
    make_spec: Callable[[tuple], PenaltySpec],
    grid: Sequence[tuple],
    target_assets: int,
    band: float = ASSET_BAND,
    options: SolveOptions | None = None,
) -> tuple[tuple, list[GridResult]]:
    """Pick the grid point with the lowest in-sample tracking error whose
    nonzero count lies within the asset band; if none does, the point with
    the count closest to the target (ties broken by tracking error)."""
    if not grid:
        raise ValueError("empty parameter grid")
    if target_assets < 1:
        raise ValueError("target asset count must be >= 1")
    X = np.asarray(asset_returns, dtype=float)
    y = np.asarray(index_returns, dtype=float)
    lo, hi = asset_band(target_assets, band)
    results = []
    for point in grid:
        point = tuple(point) if isinstance(point, Iterable) else (point,)
        wv, _ = solve(TrackingProblem(X, y, make_spec(point)), options)
        k = wv.nonzero
        results.append(GridResult(point, k, _in_sample_te(X, y, wv.weights), lo <= k <= hi))
    inside = [r for r in results if r.in_band]
    if inside:
        best = min(inside, key=lambda r: r.tracking_error)
    else:
        best = min(results, key=lambda r: (abs(r.nonzero - target_assets), r.tracking_error))
    logger.debug("grid search chose %s (%d assets, te=%.3e)", best.point, best.nonzero, best.tracking_error)
    return best.point, results


def grid_search_scaling(
    panel: ReturnPanel,
    index=None,
    kind: str = "VolEN",
    target_assets: int = 1,
    grid: Sequence[tuple] = ((1.0, 1.0),),
    vol_panel: ReturnPanel | None = None,
    options: SolveOptions | None = None,
) -> tuple[float, float]:
    """Grid search over (phi, psi) for the volatility-scaled kinds.

    ``panel`` is the in-sample fitting window; volatilities come from
    ``vol_panel`` when given (e.g. the penalty-learning slice) else ``panel``.
    """
    kind = canonical_kind(kind)
    y = panel.index_returns if index is None else np.asarray(index, dtype=float)
    vols = asset_volatilities(vol_panel or panel)

    def make(point):
        phi = point[0]
        psi = point[1] if len(point) > 1 else 0.0
        return vol_spec(panel, kind, phi, psi, vols=vols)

    point, _ = grid_search(panel.asset_returns, y, make, grid, target_assets, options=options)
    return float(point[0]), float(point[1]) if len(point) > 1 else 0.0


def gradient_scale(asset_returns, index_returns) -> float:
    """Largest |d/dw_i| of the squared tracking loss at w = 0; a natural penalty unit."""
    X = np.asarray(asset_returns, dtype=float)
    y = np.asarray(index_returns, dtype=float)
    return float(np.max(np.abs(2.0 * X.T @ y)))
