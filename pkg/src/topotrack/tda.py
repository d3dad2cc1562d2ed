"""Delay embedding, Vietoris-Rips persistence (H0/H1) and persistence landscapes.

Persistence is computed on the exact edge-length filtration: every pairwise
distance is a critical scale. H0 comes from Kruskal's algorithm on the
complete graph, H1 from a Z/2 column reduction of the triangle boundary
matrix of the flag complex truncated at dimension 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "PointCloud",
    "FiltrationSpec",
    "PersistenceDiagram",
    "PersistenceLandscape",
    "LandscapeNorm",
    "takens_embed",
    "pairwise_distances",
    "rips_persistence",
    "landscape_from_diagram",
    "mean_landscape",
    "landscape_norm",
]


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    dim: int = 0
    delay: int = 0

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, ndmin=2)
        if pts.size and not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class FiltrationSpec:
    """Rips filtration settings. Only the Euclidean exact-scale filtration exists."""

    max_homology_dim: int = 1

    def __post_init__(self):
        if self.max_homology_dim not in (0, 1):
            raise ValueError("max_homology_dim must be 0 or 1")


@dataclass(frozen=True)
class PersistenceDiagram:
    """Multiset of (birth, death, dim) rows; death may be +inf."""

    features: np.ndarray

    def __post_init__(self):
        feats = np.array(self.features, dtype=float).reshape(-1, 3)
        if np.any(feats[:, 1] < feats[:, 0]):
            raise ValueError("death < birth in persistence diagram")
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)

    def bars(self, dim: int, finite: bool = True) -> np.ndarray:
        """(m, 2) array of (birth, death) for one homology dimension."""
        sel = self.features[:, 2] == dim
        if finite:
            sel &= np.isfinite(self.features[:, 1])
        return self.features[sel, :2]

    def sorted_features(self) -> list[tuple[float, float, int]]:
        return sorted((float(b), float(d), int(f)) for b, d, f in self.features)


@dataclass(frozen=True)
class PersistenceLandscape:
    """Landscape functions lambda_1, lambda_2, ... as critical-point arrays.

    Each function is an (m, 2) array of (x, y) knots with nondecreasing x; the
    function is linear between knots and zero outside the first/last knot.
    """

    functions: tuple[np.ndarray, ...] = field(default_factory=tuple)

    def __post_init__(self):
        funcs = []
        for f in self.functions:
            arr = np.array(f, dtype=float).reshape(-1, 2)
            arr.setflags(write=False)
            funcs.append(arr)
        object.__setattr__(self, "functions", tuple(funcs))

    def __len__(self) -> int:
        return len(self.functions)

    def evaluate(self, k: int, x) -> np.ndarray:
        """Value of lambda_k (1-based) at x; zero for k beyond the stored depth."""
        x = np.asarray(x, dtype=float)
        if k < 1 or k > len(self.functions):
            return np.zeros_like(x)
        knots = self.functions[k - 1]
        if knots.shape[0] == 0:
            return np.zeros_like(x)
        return np.interp(x, knots[:, 0], knots[:, 1], left=0.0, right=0.0)

    def knots(self) -> np.ndarray:
        """Sorted union of every x-knot across all functions."""
        if not self.functions:
            return np.empty(0)
        return np.unique(np.concatenate([f[:, 0] for f in self.functions]))


@dataclass(frozen=True)
class LandscapeNorm:
    value: float
    p: float
    k_max: int


def takens_embed(series, d: int = 3, tau: int = 1) -> PointCloud:
    """Delay-embed a scalar series into R^d.

    Row j is ``(x_j, x_{j+tau}, ..., x_{j+(d-1)tau})``; there are
    ``len(series) - (d-1)*tau`` rows.
    """
    x = np.asarray(series, dtype=float).ravel()
    if d < 2 or tau < 1:
        raise ValueError("embedding requires d >= 2 and tau >= 1")
    m = x.size - (d - 1) * tau
    if m < 1:
        raise ValueError(
            f"series of length {x.size} too short for embedding d={d}, tau={tau}"
        )
    idx = np.arange(m)[:, None] + tau * np.arange(d)[None, :]
    return PointCloud(x[idx], dim=d, delay=tau)


def pairwise_distances(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    diff = pts[:, None, :] - pts[None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1))


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        parent = self.parent
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        # younger (larger index) root joins the older one
        if ra < rb:
            self.parent[rb] = ra
        else:
            self.parent[ra] = rb
        return True


def _sorted_edges(dist: np.ndarray):
    n = dist.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    lengths = dist[iu, ju]
    # diameter first, then lexicographic vertex order
    order = np.lexsort((ju, iu, lengths))
    return iu[order], ju[order], lengths[order]


def _h1_pairs(dist, ei, ej, elen, negative):
    """Persistence pairs (birth, death) in dimension 1."""
    n = dist.shape[0]
    n_edges = ei.size
    edge_id = np.full((n, n), -1, dtype=np.int64)
    edge_id[ei, ej] = np.arange(n_edges)
    edge_id[ej, ei] = np.arange(n_edges)

    # positive (cycle-creating) edges are those Kruskal did not use
    n_positive = n_edges - int(negative.sum())
    if n_positive == 0:
        return []

    tri = np.array(
        [(a, b, c) for a in range(n) for b in range(a + 1, n) for c in range(b + 1, n)],
        dtype=np.int64,
    )
    e_ab = edge_id[tri[:, 0], tri[:, 1]]
    e_ac = edge_id[tri[:, 0], tri[:, 2]]
    e_bc = edge_id[tri[:, 1], tri[:, 2]]
    # edge ids follow the filtration order, so the newest edge fixes the diameter
    newest = np.maximum(np.maximum(e_ab, e_ac), e_bc)
    diam = elen[newest]
    order = np.lexsort((tri[:, 2], tri[:, 1], tri[:, 0], diam))

    pivots: dict[int, int] = {}
    pairs = []
    found = 0
    for t in order.tolist():
        col = (1 << int(e_ab[t])) | (1 << int(e_ac[t])) | (1 << int(e_bc[t]))
        while col:
            low = col.bit_length() - 1
            other = pivots.get(low)
            if other is None:
                pivots[low] = col
                found += 1
                death = float(diam[t])
                birth = float(elen[low])
                if death > birth:
                    pairs.append((birth, death))
                break
            col ^= other
        if found == n_positive:
            break
    return pairs


def rips_persistence(cloud, spec: FiltrationSpec | None = None) -> PersistenceDiagram:
    """Vietoris-Rips persistence diagram of a point cloud in dimensions 0 and 1.

    Zero-length features are dropped. Dimension 0 always carries exactly one
    essential feature ``(0, inf)`` for a nonempty cloud.
    """
    spec = spec or FiltrationSpec()
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, float)
    pts = np.atleast_2d(pts)
    n = pts.shape[0]
    if n == 0:
        return PersistenceDiagram(np.empty((0, 3)))

    feats: list[tuple[float, float, int]] = [(0.0, math.inf, 0)]
    if n == 1:
        return PersistenceDiagram(feats)

    dist = pairwise_distances(pts)
    ei, ej, elen = _sorted_edges(dist)
    uf = _UnionFind(n)
    negative = np.zeros(ei.size, dtype=bool)
    merges = 0
    for e, (a, b) in enumerate(zip(ei.tolist(), ej.tolist())):
        if uf.union(a, b):
            negative[e] = True
            merges += 1
            if elen[e] > 0.0:
                feats.append((0.0, float(elen[e]), 0))
            if merges == n - 1:
                break

    if spec.max_homology_dim >= 1 and n >= 3:
        feats.extend((b, d, 1) for b, d in _h1_pairs(dist, ei, ej, elen, negative))
    return PersistenceDiagram(feats)


def _finite_bars(bars) -> list[tuple[float, float]]:
    arr = np.asarray(bars, dtype=float).reshape(-1, 2)
    keep = np.isfinite(arr[:, 1]) & (arr[:, 1] > arr[:, 0])
    return [(float(b), float(d)) for b, d in arr[keep]]


def _landscape_sweep(bars: list[tuple[float, float]]) -> list[np.ndarray]:
    """Exact landscape knots via the birth-ordered sweep over tents."""
    queue = sorted(bars, key=lambda bd: (bd[0], -bd[1]))
    out = []
    while queue:
        b, d = queue.pop(0)
        knots = [(b, 0.0), ((b + d) / 2, (d - b) / 2)]
        p = 0
        while True:
            nxt = next((i for i in range(p, len(queue)) if queue[i][1] > d), None)
            if nxt is None:
                knots.append((d, 0.0))
                break
            b2, d2 = queue.pop(nxt)
            p = nxt
            if b2 > d:
                knots.append((d, 0.0))
            if b2 >= d:
                knots.append((b2, 0.0))
            else:
                knots.append(((b2 + d) / 2, (d - b2) / 2))
                key = (b2, -d)
                q = p
                while q < len(queue) and (queue[q][0], -queue[q][1]) <= key:
                    q += 1
                queue.insert(q, (b2, d))
                p = q + 1
            knots.append(((b2 + d2) / 2, (d2 - b2) / 2))
            b, d = b2, d2
        out.append(np.array(knots))
    return out


def landscape_from_diagram(diagram, dim: int | None = None) -> PersistenceLandscape:
    """Persistence landscape of the finite bars of one homology dimension.

    ``diagram`` may be a :class:`PersistenceDiagram` (``dim`` required) or a
    plain sequence of (birth, death) pairs. Infinite and zero-length bars are
    ignored.
    """
    if isinstance(diagram, PersistenceDiagram):
        if dim is None:
            raise ValueError("dim is required when passing a PersistenceDiagram")
        bars = diagram.bars(dim)
    else:
        bars = diagram
    return PersistenceLandscape(tuple(_landscape_sweep(_finite_bars(bars))))


def mean_landscape(landscapes: Sequence[PersistenceLandscape]) -> PersistenceLandscape:
    """Pointwise average, exact on the merged knot grid of each lambda_k."""
    if not landscapes:
        raise ValueError("mean of an empty list of landscapes")
    count = len(landscapes)
    depth = max(len(ls) for ls in landscapes)
    funcs = []
    for k in range(1, depth + 1):
        parts = [ls.functions[k - 1] for ls in landscapes if len(ls) >= k]
        grid = np.unique(np.concatenate([f[:, 0] for f in parts]))
        total = np.zeros_like(grid)
        for f in parts:
            total += np.interp(grid, f[:, 0], f[:, 1], left=0.0, right=0.0)
        funcs.append(np.column_stack([grid, total / count]))
    return PersistenceLandscape(tuple(funcs))


def _segment_power_integral(x0, x1, y0, y1, p: float) -> float:
    width = x1 - x0
    if width <= 0.0:
        return 0.0
    if p == 1.0:
        return 0.5 * width * (y0 + y1)
    if p == 2.0:
        return width * (y0 * y0 + y0 * y1 + y1 * y1) / 3.0
    if y1 == y0:
        return width * y0**p
    return width * (y1 ** (p + 1) - y0 ** (p + 1)) / ((p + 1) * (y1 - y0))


def _function_power_integral(knots: np.ndarray, p: float) -> float:
    if knots.shape[0] < 2:
        return 0.0
    x, y = knots[:, 0], np.abs(knots[:, 1])
    if p == 1.0:
        return float(np.sum(0.5 * np.diff(x) * (y[1:] + y[:-1])))
    return sum(
        _segment_power_integral(x[i], x[i + 1], y[i], y[i + 1], p)
        for i in range(x.size - 1)
    )


def landscape_norm(
    landscape: PersistenceLandscape, p: float = 1.0, k_max: int = 1
) -> LandscapeNorm:
    """L_p norm over the first ``k_max`` landscape functions, integrated exactly."""
    if p < 1:
        raise ValueError("norm order p must be >= 1")
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    total = sum(
        _function_power_integral(f, float(p)) for f in landscape.functions[:k_max]
    )
    return LandscapeNorm(value=float(total ** (1.0 / p)), p=float(p), k_max=k_max)


def diagram_rows(diagram: PersistenceDiagram) -> Iterable[tuple[float, float, int]]:
    """(birth, death, dim) rows for delimited debug output."""
    for b, d, f in diagram.features:
        yield float(b), float(d), int(f)


def landscape_rows(landscape: PersistenceLandscape) -> Iterable[tuple[int, float, float]]:
    """(k, x, y) rows for delimited debug output."""
    for k, f in enumerate(landscape.functions, start=1):
        for x, y in f:
            yield k, float(x), float(y)
