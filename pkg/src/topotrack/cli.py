"""Command-line entry point: ``topotrack {stats,penalties,backtest,synth}``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import penalty as pen
from . import plotting, report
from .backtest import run_backtest
from .config import RunConfig, resolve
from .market_data import (
    DataError,
    PricePanel,
    ReturnPanel,
    compute_returns,
    describe,
    filter_full_history,
    load_prices,
)
from .metrics import correlation
from .solver import SolverError, TrackingProblem, solve
from .synth import generate_market

logger = logging.getLogger("topotrack")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ----------------------------------------------------------------------------
# data plumbing


def _date_range(panel: PricePanel, start, end) -> PricePanel:
    if start is None and end is None:
        return panel
    keep = [i for i, d in enumerate(panel.dates) if (start is None or d >= start) and (end is None or d <= end)]
    if not keep:
        raise DataError(f"no dates in range [{start}, {end}]")
    return PricePanel(
        tuple(panel.dates[i] for i in keep), panel.tickers, panel.prices[keep], panel.index_ticker
    )


def load_returns(cfg: RunConfig) -> ReturnPanel:
    if not cfg.data:
        raise UsageError("--data is required")
    panel = load_prices(cfg.data, cfg.index_ticker, cfg.delimiter)
    panel = _date_range(panel, cfg.start_date, cfg.end_date)
    panel = filter_full_history(panel)
    if not panel.asset_tickers:
        raise DataError("no constituent tickers left after the full-history filter")
    return compute_returns(panel)


def _cache(cfg: RunConfig):
    if cfg.cache_dir is None:
        return pen.LandscapeCache(), None
    path = Path(cfg.cache_dir) / "landscapes.pkl"
    return pen.LandscapeCache.load(path), path


def _whole_period_norms(returns: ReturnPanel, cfg: RunConfig, cache):
    """Dim-0/dim-1 norms averaged over every sub-series that fits the sample."""
    months = returns.n_days // 21
    try:
        plan = pen.SubSeriesPlan(months, cfg.sub_len, cfg.sub_step)
    except ValueError:
        nan = np.full(returns.n_assets, np.nan)
        return nan, nan.copy()
    return pen.tda_norms(returns, plan, cfg.embed, cache, 0, cfg.norm_p, cfg.k_max)


# ----------------------------------------------------------------------------
# subcommands


def cmd_stats(cfg: RunConfig) -> list[Path]:
    returns = load_returns(cfg)
    out = Path(cfg.out_dir)
    d = cfg.delimiter
    cache, cache_path = _cache(cfg)

    idx_stats = describe(returns.index_returns)
    per_asset = [describe(returns.asset_returns[:, i]) for i in range(returns.n_assets)]
    fields = [k for k, _ in idx_stats.rows()]
    written = [
        report.write_rows(out / "stats_index.csv", ("statistic", returns.index_ticker), idx_stats.rows(), d),
        report.write_rows(
            out / "stats_assets.csv",
            ["ticker"] + fields,
            ([t] + [v for _, v in s.rows()] for t, s in zip(returns.tickers, per_asset)),
            d,
        ),
    ]

    n0, n1 = _whole_period_norms(returns, cfg, cache)
    columns = {
        "correlation": np.array([correlation(returns.asset_returns[:, i], returns.index_returns) for i in range(returns.n_assets)]),
        "mean": np.array([s.mean for s in per_asset]),
        "std_dev": np.array([s.std_dev for s in per_asset]),
        "volatility": np.array([s.volatility for s in per_asset]),
        "tda_norm_0": n0,
        "tda_norm_1": n1,
    }
    written.append(report.write_rows(
        out / "histogram_data.csv",
        ["ticker"] + list(columns),
        ([t] + [columns[c][i] for c in columns] for i, t in enumerate(returns.tickers)),
        d,
    ))
    markers = []
    for name, vals in columns.items():
        v = vals[np.isfinite(vals)]
        markers.append((name, float(np.mean(v)) if v.size else np.nan, float(np.median(v)) if v.size else np.nan))
    written.append(report.write_rows(out / "histogram_markers.csv", ("series", "mean", "median"), markers, d))
    if cfg.plots:
        written.append(plotting.histogram_figure(out / "histograms.svg", columns))
    if cache_path is not None:
        cache.save(cache_path)
    return written


def _window_slice(returns: ReturnPanel, cfg: RunConfig):
    plan = cfg.window_plan(returns.n_days)
    if plan.count < 1:
        raise DataError(f"{returns.n_days} return days is too short for one window")
    if not 0 <= cfg.window < plan.count:
        raise UsageError(f"window {cfg.window} out of range [0, {plan.count - 1}]")
    ins_rng, _ = plan.windows[cfg.window]
    ins = returns.slice(ins_rng.start, ins_rng.stop)
    days = cfg.sub_plan().days
    if ins.n_days < days:
        raise UsageError("in-sample window shorter than the penalty-learning window")
    return ins, ins.slice(ins.n_days - days, ins.n_days), ins_rng.start + ins.n_days - days


def penalty_for_window(returns: ReturnPanel, cfg: RunConfig, cache=None) -> pen.PenaltySpec:
    kind = pen.canonical_kind(cfg.penalty_kind)
    ins, learn, offset = _window_slice(returns, cfg)
    if kind in pen.TDA_KINDS:
        return pen.build_tda_spec(learn, cfg.sub_plan(), kind, cache, offset, cfg.embed, cfg.norm_p, cfg.k_max)
    if kind == "TE":
        return pen.PenaltySpec.zero(ins.n_assets, ins.tickers)
    if kind in pen.VOL_KINDS:
        psi = cfg.psi if kind == "VolEN" else 0.0
        return pen.vol_spec(learn, kind, cfg.phi, psi)
    if kind == "AdaptiveEN":
        pilot, _ = solve(
            TrackingProblem(ins.asset_returns, ins.index_returns, pen.PenaltySpec.zero(ins.n_assets)),
            cfg.backtest_config().options,
        )
        return pen.adaptive_en_spec(pilot, cfg.lambda1, cfg.lambda2, tickers=ins.tickers)
    return pen.slope_spec(ins.n_assets, cfg.slope_lambda, cfg.slope_shape, ins.tickers)


def cmd_penalties(cfg: RunConfig) -> list[Path]:
    returns = load_returns(cfg)
    cache, cache_path = _cache(cfg)
    t0 = time.perf_counter()
    spec = penalty_for_window(returns, cfg, cache)
    logger.info(
        "penalties %s window %d: %.3fs (cache hits %d, misses %d)",
        spec.kind, cfg.window, time.perf_counter() - t0, cache.hits, cache.misses,
    )
    if cache_path is not None:
        cache.save(cache_path)
    return [report.write_penalties(Path(cfg.out_dir) / "penalties.csv", spec, cfg.delimiter)]


def _kinds(cfg: RunConfig) -> tuple[str, ...]:
    # the unpenalized benchmark is always reported alongside
    return tuple(dict.fromkeys(("TE",) + cfg.models))


def cmd_backtest(cfg: RunConfig) -> list[Path]:
    returns = load_returns(cfg)
    plan = cfg.window_plan(returns.n_days)
    if plan.count < 1:
        raise DataError(
            f"{returns.n_days} return days cannot hold a {cfg.in_sample_days}+{cfg.out_sample_days} window"
        )
    out = Path(cfg.out_dir)
    cache, cache_path = _cache(cfg)
    kinds = _kinds(cfg)
    manifest = {"kinds": list(kinds), "windows": plan.count, "status": "ok"}
    try:
        reports = run_backtest(returns, plan, kinds, cfg.backtest_config(), cache)
    except SolverError as exc:
        manifest.update(status="failed", error=str(exc))
        partial = getattr(exc, "partial", None)
        if partial:
            manifest.update(kind=exc.kind, window=exc.window)
            rows = [
                (k, w.window, t, float(v))
                for k, ws in partial.items()
                for w in ws
                for t, v in zip(returns.tickers, w.weights.weights)
            ]
            report.write_rows(out / "weights_partial.csv", ("model", "window", "ticker", "weight"), rows, cfg.delimiter)
        report.write_manifest(out / "manifest.json", manifest)
        raise
    finally:
        if cache_path is not None:
            cache.save(cache_path)

    manifest["failed_windows"] = {k: list(r.failed_windows) for k, r in reports.items()}
    written = report.write_backtest(out, reports, cfg.var_alpha, cfg.risk_free, cfg.delimiter)
    written.append(report.write_manifest(out / "manifest.json", manifest))
    if cfg.plots:
        first = reports[kinds[0]]
        written.append(plotting.wealth_figure(
            out / "wealth.svg",
            {k: r.wealth_curve for k, r in reports.items()},
            first.index_wealth,
        ))
    return written


def cmd_synth(cfg: RunConfig) -> list[Path]:
    market = generate_market(
        n_assets=cfg.n_assets, k_true=cfg.k_true, n_days=cfg.n_days,
        noise=cfg.noise, seed=cfg.seed, index_ticker=cfg.index_ticker,
    )
    out = Path(cfg.out_dir)
    p = market.prices
    return [
        report.write_rows(
            out / "prices.csv", ("date",) + p.tickers,
            ([d] + list(row) for d, row in zip(p.dates, p.prices)), cfg.delimiter,
        ),
        report.write_rows(
            out / "true_weights.csv", ("ticker", "weight"),
            zip(market.returns.tickers, market.true_weights), cfg.delimiter,
        ),
    ]


COMMANDS = {
    "stats": cmd_stats,
    "penalties": cmd_penalties,
    "backtest": cmd_backtest,
    "synth": cmd_synth,
}


# ----------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--data", help="delimited price file")
    common.add_argument("--index-ticker", dest="index_ticker")
    common.add_argument("--models", help="comma-separated model kinds")
    common.add_argument("--out-dir", dest="out_dir")
    common.add_argument("--seed", type=int)
    common.add_argument("--alpha", dest="var_alpha", type=float, help="VaR confidence level")
    common.add_argument("--retune-per-window", dest="retune_per_window", action="store_const", const=True)
    common.add_argument("--no-warm-start", dest="warm_start", action="store_const", const=False)
    common.add_argument("--start-date", dest="start_date")
    common.add_argument("--end-date", dest="end_date")
    common.add_argument("--cache-dir", dest="cache_dir")
    common.add_argument("--no-plots", dest="plots", action="store_const", const=False)
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = _Parser(prog="topotrack", description="Sparse index tracking with topological penalties.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("stats", parents=[common], help="descriptive statistics and histogram data")
    p = sub.add_parser("penalties", parents=[common], help="penalty coefficients for one window")
    p.add_argument("--kind", dest="penalty_kind")
    p.add_argument("--window", type=int)
    sub.add_parser("backtest", parents=[common], help="rolling-window backtest")
    s = sub.add_parser("synth", parents=[common], help="seeded synthetic market")
    s.add_argument("--n-assets", dest="n_assets", type=int)
    s.add_argument("--k-true", dest="k_true", type=int)
    s.add_argument("--days", dest="n_days", type=int)
    s.add_argument("--noise", type=float)
    return parser


_NOT_CONFIG = {"command", "config", "verbose"}


def config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides = {k: v for k, v in vars(args).items() if k not in _NOT_CONFIG and v is not None}
    return resolve(args.config, overrides)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    logger.setLevel(level)
    try:
        cfg = config_from_args(args)
    except (OSError, json.JSONDecodeError, ValueError, TypeError) as exc:
        print(f"topotrack: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        written = COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"topotrack: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"topotrack: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SolverError as exc:
        print(f"topotrack: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"topotrack: invalid parameter: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for path in written:
        logger.info("wrote %s", path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
