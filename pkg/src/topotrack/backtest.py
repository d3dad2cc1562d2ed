"""Rolling-window backtest: learn penalties and weights in-sample, hold them
fixed out-of-sample, and score the concatenated out-of-sample series."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import penalty as pen
from .market_data import ReturnPanel
from .metrics import MetricSuite, metric_suite
from .solver import (
    SolveDiagnostics,
    SolveOptions,
    SolverError,
    TrackingProblem,
    WeightVector,
    solve,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WindowPlan:
    """Fixed-length rolling windows shifted by the out-of-sample length."""

    total_days: int
    in_sample_days: int = 504
    out_sample_days: int = 21
    step: int | None = None

    def __post_init__(self):
        step = self.out_sample_days if self.step is None else self.step
        if step != self.out_sample_days:
            raise ValueError("window step must equal the out-of-sample length")
        if self.in_sample_days < 2 or self.out_sample_days < 1:
            raise ValueError("window lengths must be positive (in-sample >= 2)")
        object.__setattr__(self, "step", step)

    @property
    def count(self) -> int:
        return max(0, (self.total_days - self.in_sample_days) // self.out_sample_days)

    @property
    def windows(self) -> list[tuple[range, range]]:
        d1, d2 = self.in_sample_days, self.out_sample_days
        return [
            (range(r * d2, r * d2 + d1), range(r * d2 + d1, r * d2 + d1 + d2))
            for r in range(self.count)
        ]


def _default_grid(points: int = 13) -> np.ndarray:
    return np.logspace(-4, 0, points)


@dataclass(frozen=True)
class BacktestConfig:
    """Knobs for penalty learning, tuning and solving.

    Grids are relative: they are multiplied by a per-window gradient scale
    (see :func:`topotrack.penalty.gradient_scale`) so they adapt to the data's
    units. ``retune_per_window`` re-runs the grid searches on every window;
    otherwise they run on the first window only.
    """

    sub_plan: pen.SubSeriesPlan = field(default_factory=pen.SubSeriesPlan)
    embed: tuple[int, int] = (3, 1)
    norm_p: float = 1.0
    k_max: int = 1
    var_alpha: float = 0.95
    risk_free: float = 0.0
    retune_per_window: bool = False
    warm_start: bool = True
    exclude_failed: bool = False
    asset_band: float = pen.ASSET_BAND
    vol_grid: tuple[float, ...] = tuple(_default_grid())
    vol_psi_grid: tuple[float, ...] = (0.0, 1e-2, 1e-1, 1.0)
    en_lambda1_grid: tuple[float, ...] = tuple(_default_grid())
    en_lambda2_grid: tuple[float, ...] = (1e-3, 1e-2, 1e-1)
    slope_grid: tuple[float, ...] = tuple(_default_grid())
    slope_shape: str = "linear"
    options: SolveOptions = field(default_factory=SolveOptions)


@dataclass(frozen=True)
class WindowResult:
    window: int
    in_sample: range
    out_sample: range
    weights: WeightVector
    diagnostics: SolveDiagnostics
    params: tuple = ()
    in_sample_metrics: MetricSuite | None = None

    @property
    def nonzero(self) -> int:
        return self.weights.nonzero


@dataclass(frozen=True)
class BacktestReport:
    kind: str
    tickers: tuple[str, ...]
    per_window: tuple[WindowResult, ...]
    oos_returns: np.ndarray
    index_oos: np.ndarray
    oos_dates: tuple[str, ...]
    metrics: MetricSuite
    in_sample_metrics: MetricSuite
    failed_windows: tuple[int, ...] = ()

    @property
    def wealth_curve(self) -> np.ndarray:
        return wealth_curve(self.oos_returns)

    @property
    def index_wealth(self) -> np.ndarray:
        return wealth_curve(self.index_oos)

    def weight_history(self) -> list[WeightVector]:
        return [w.weights for w in self.per_window]

    def window_metrics(self, alpha: float = 0.95, risk_free: float = 0.0) -> list[MetricSuite]:
        """Per-window out-of-sample breakdown of the metric suite."""
        out, pos = [], 0
        for w in self.per_window:
            if w.window in self.failed_windows:
                continue
            k = len(w.out_sample)
            out.append(
                metric_suite(
                    self.oos_returns[pos : pos + k],
                    self.index_oos[pos : pos + k],
                    alpha=alpha,
                    risk_free=risk_free,
                    mean_assets=w.nonzero,
                )
            )
            pos += k
        return out


def wealth_curve(returns) -> np.ndarray:
    """Value of $1 invested: 1 followed by the cumulative product of (1 + r)."""
    r = np.asarray(returns, dtype=float).ravel()
    return np.concatenate([[1.0], np.cumprod(1.0 + r)])


def _needs(kinds) -> set[str]:
    """Kinds that must be solved each window (requested plus band targets)."""
    need = set(kinds)
    if need & {"VolEN", "AdaptiveEN"}:
        need.add("TDAEN12")
    if need & {"Vol_L1", "SLOPE"}:
        need.add("TDA_L1")
    if "AdaptiveEN" in need:
        need.add("TE")
    return need


class _Runner:
    def __init__(self, panel, plan, kinds, config, cache):
        self.panel = panel
        self.plan = plan
        self.kinds = kinds
        self.cfg = config
        self.cache = cache if cache is not None else pen.LandscapeCache()
        self.tuned: dict[str, tuple] = {}

    def window_specs(self, r: int, ins: ReturnPanel, offset: int):
        """Solve every needed kind on one in-sample window."""
        cfg = self.cfg
        needed = _needs(self.kinds)
        X, y = ins.asset_returns, ins.index_returns
        learn = ins.slice(ins.n_days - cfg.sub_plan.days, ins.n_days)
        learn_offset = offset + ins.n_days - cfg.sub_plan.days
        scale = pen.gradient_scale(X, y)
        results: dict[str, tuple[pen.PenaltySpec, tuple]] = {}
        solved: dict[str, WeightVector] = {}

        norms = None
        if needed & set(pen.TDA_KINDS):
            norms = pen.tda_norms(
                learn, cfg.sub_plan, cfg.embed, self.cache, learn_offset, cfg.norm_p, cfg.k_max
            )
        for kind in pen.TDA_KINDS:
            if kind in needed:
                results[kind] = (pen.build_tda_spec(learn, cfg.sub_plan, kind, norms=norms), ())
        if "TE" in needed:
            results["TE"] = (pen.PenaltySpec.zero(ins.n_assets, ins.tickers), ())

        def run(kind):
            spec = results[kind][0]
            solved[kind] = self.solve(kind, TrackingProblem(X, y, spec))

        for kind in ("TE", "TDAEN12", "TDAEN11", "TDA_L1"):
            if kind in results:
                run(kind)

        vols = pen.asset_volatilities(learn) if needed & set(pen.VOL_KINDS) else None
        retune = cfg.retune_per_window or r == 0

        def tuned(kind, make, grid, target_kind):
            if retune or kind not in self.tuned:
                target = solved[target_kind].nonzero
                point, _ = pen.grid_search(
                    X, y, make, grid, target, cfg.asset_band, cfg.options
                )
                self.tuned[kind] = point
            point = self.tuned[kind]
            results[kind] = (make(point), point)
            run(kind)

        if "VolEN" in needed:
            unit = scale / max(float(np.mean(vols)), 1e-300)
            grid = [(unit * a, np.sqrt(unit) * b) for a in cfg.vol_grid for b in cfg.vol_psi_grid]
            tuned("VolEN", lambda pt: pen.vol_spec(ins, "VolEN", pt[0], pt[1], vols=vols), grid, "TDAEN12")
        if "Vol_L1" in needed:
            unit = scale / max(float(np.mean(vols)), 1e-300)
            grid = [(unit * a, 0.0) for a in cfg.vol_grid]
            tuned("Vol_L1", lambda pt: pen.vol_spec(ins, "Vol_L1", pt[0], 0.0, vols=vols), grid, "TDA_L1")
        if "AdaptiveEN" in needed:
            pilot = solved["TE"]
            unit = scale * float(np.mean(np.abs(pilot.weights)))
            grid = [(unit * a, np.sqrt(scale) * b) for a in cfg.en_lambda1_grid for b in cfg.en_lambda2_grid]
            tuned(
                "AdaptiveEN",
                lambda pt: pen.adaptive_en_spec(pilot, pt[0], pt[1], tickers=ins.tickers),
                grid,
                "TDAEN12",
            )
        if "SLOPE" in needed:
            grid = [(scale * a,) for a in cfg.slope_grid]
            tuned(
                "SLOPE",
                lambda pt: pen.slope_spec(ins.n_assets, pt[0], cfg.slope_shape, ins.tickers),
                grid,
                "TDA_L1",
            )
        return {k: (results[k][0], results[k][1], solved[k]) for k in self.kinds}

    def solve(self, kind, problem):
        start = self.last.get(kind) if self.cfg.warm_start else None
        wv, diag = solve(problem, self.cfg.options, warm_start=start)
        self.diags[kind] = diag
        return wv

    def run(self) -> dict[str, BacktestReport]:
        cfg = self.cfg
        panel, plan = self.panel, self.plan
        if panel.n_days < plan.total_days:
            raise ValueError(f"panel has {panel.n_days} days, plan needs {plan.total_days}")
        if plan.count < 1:
            raise ValueError("window plan yields no windows")
        if plan.in_sample_days < cfg.sub_plan.days:
            raise ValueError("in-sample window shorter than the penalty-learning window")
        self.last: dict[str, WeightVector] = {}
        per_kind: dict[str, list[WindowResult]] = {k: [] for k in self.kinds}
        failed: dict[str, list[int]] = {k: [] for k in self.kinds}
        t0 = time.perf_counter()
        for r, (ins_rng, oos_rng) in enumerate(plan.windows):
            ins = panel.slice(ins_rng.start, ins_rng.stop)
            self.diags: dict[str, SolveDiagnostics] = {}
            specs = self.window_specs(r, ins, ins_rng.start)
            for kind in self.kinds:
                spec, params, wv = specs[kind]
                diag = self.diags[kind]
                fitted = ins.asset_returns @ wv.weights
                res = WindowResult(
                    r,
                    ins_rng,
                    oos_rng,
                    wv,
                    diag,
                    tuple(float(v) for v in params),
                    metric_suite(
                        fitted, ins.index_returns, alpha=cfg.var_alpha,
                        risk_free=cfg.risk_free, mean_assets=wv.nonzero,
                    ),
                )
                per_kind[kind].append(res)
                if not diag.converged:
                    failed[kind].append(r)
                    if not cfg.exclude_failed:
                        err = SolverError(
                            f"{kind} solve did not converge in window {r} "
                            f"(kkt={diag.kkt_residual:.3e})"
                        )
                        err.kind, err.window, err.partial = kind, r, per_kind
                        raise err
                self.last[kind] = wv
            logger.debug("window %d/%d done (%.1fs)", r + 1, plan.count, time.perf_counter() - t0)
        logger.info(
            "backtest: %d windows x %d kinds in %.1fs (cache hits %d, misses %d)",
            plan.count, len(self.kinds), time.perf_counter() - t0, self.cache.hits, self.cache.misses,
        )
        return {k: self._report(k, per_kind[k], failed[k]) for k in self.kinds}

    def _report(self, kind, windows, failed) -> BacktestReport:
        cfg, panel = self.cfg, self.panel
        port, idx, dates = [], [], []
        for w in windows:
            if w.window in failed:
                continue
            sl = slice(w.out_sample.start, w.out_sample.stop)
            port.append(panel.asset_returns[sl] @ w.weights.weights)
            idx.append(panel.index_returns[sl])
            dates.extend(panel.dates[sl])
        if not port:
            raise SolverError(f"{kind}: every window failed")
        oos = np.concatenate(port)
        ind = np.concatenate(idx)
        history = [w.weights for w in windows]
        suite = metric_suite(
            oos, ind, history, cfg.var_alpha, cfg.risk_free,
            mean_assets=float(np.mean([w.nonzero for w in windows])),
        )
        ins_suite = MetricSuite.mean(w.in_sample_metrics for w in windows)
        ins_suite = MetricSuite(**{**ins_suite.as_dict(), "tr": suite.tr})
        oos.setflags(write=False)
        ind.setflags(write=False)
        return BacktestReport(
            kind, panel.tickers, tuple(windows), oos, ind, tuple(dates), suite, ins_suite, tuple(failed)
        )


def run_backtest(
    panel: ReturnPanel,
    plan: WindowPlan | None = None,
    kinds=("TE", "TDAEN12"),
    config: BacktestConfig | None = None,
    cache: pen.LandscapeCache | None = None,
) -> dict[str, BacktestReport]:
    """Run the rolling-window protocol for each model kind.

    Penalties and weights use in-sample rows only; each window's weights are
    then applied unchanged to its out-of-sample rows.
    """
    kinds = tuple(dict.fromkeys(pen.canonical_kind(k) for k in kinds))
    if not kinds:
        raise ValueError("no model kinds requested")
    plan = plan or WindowPlan(panel.n_days)
    return _Runner(panel, plan, kinds, config or BacktestConfig(), cache).run()


def support_recall(report: BacktestReport, true_support, top: int | None = None) -> float:
    """Mean fraction of the true support found among each window's top |w|."""
    truth = set(int(i) for i in true_support)
    top = top or len(truth)
    hits = []
    for w in report.per_window:
        order = np.argsort(-np.abs(w.weights.weights), kind="stable")[:top]
        hits.append(len(truth.intersection(order.tolist())) / len(truth))
    return float(np.mean(hits))
