"""Sparse index tracking with topological-data-analysis penalties."""

from .backtest import BacktestConfig, BacktestReport, WindowPlan, run_backtest
from .market_data import DataError, PricePanel, ReturnPanel, compute_returns, describe, load_prices
from .metrics import MetricSuite, metric_suite
from .penalty import PenaltySpec, SubSeriesPlan
from .solver import SolveOptions, SolverError, TrackingProblem, solve
from .tda import (
    PersistenceDiagram,
    PersistenceLandscape,
    landscape_from_diagram,
    landscape_norm,
    rips_persistence,
    takens_embed,
)

__version__ = "0.1.0"

__all__ = [
    "BacktestConfig",
    "BacktestReport",
    "DataError",
    "MetricSuite",
    "PenaltySpec",
    "PersistenceDiagram",
    "PersistenceLandscape",
    "PricePanel",
    "ReturnPanel",
    "SolveOptions",
    "SolverError",
    "SubSeriesPlan",
    "TrackingProblem",
    "WindowPlan",
    "compute_returns",
    "describe",
    "landscape_from_diagram",
    "landscape_norm",
    "load_prices",
    "metric_suite",
    "rips_persistence",
    "run_backtest",
    "solve",
    "takens_embed",
]
