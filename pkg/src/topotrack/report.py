"""Delimited-text writers for diagrams, penalties, weights and backtest reports.

Floats are written in locale-independent scientific notation with 17
significant digits so values round-trip exactly.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .metrics import METRIC_LABELS, MetricSuite


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.16e}"
    return str(value)


def write_rows(path, header: Sequence[str], rows: Iterable[Sequence], delimiter: str = ",") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def write_key_values(path, pairs, delimiter: str = ",") -> Path:
    return write_rows(path, ("key", "value"), pairs, delimiter)


def write_penalties(path, spec, delimiter: str = ",") -> Path:
    label = "rank" if spec.kind == "SLOPE" else "ticker"
    return write_rows(path, (label, "alpha", "beta"), spec.rows(), delimiter)


def write_diagram(path, diagram, delimiter: str = ",") -> Path:
    from .tda import diagram_rows

    return write_rows(path, ("birth", "death", "dim"), diagram_rows(diagram), delimiter)


def write_landscape(path, landscape, delimiter: str = ",") -> Path:
    from .tda import landscape_rows

    return write_rows(path, ("k", "x", "y"), landscape_rows(landscape), delimiter)


def write_metric_table(path, suites: dict[str, MetricSuite], delimiter: str = ",") -> Path:
    """Rows are metrics, columns are model kinds."""
    kinds = list(suites)
    rows = [
        [METRIC_LABELS[name]] + [getattr(suites[k], name) for k in kinds]
        for name in MetricSuite.names()
    ]
    return write_rows(path, ["metric"] + kinds, rows, delimiter)


def write_backtest(out_dir, reports: dict, alpha: float = 0.95, risk_free: float = 0.0, delimiter: str = ",") -> list[Path]:
    out = Path(out_dir)
    kinds = list(reports)
    first = reports[kinds[0]]
    written = [
        write_metric_table(out / "metrics.csv", {k: r.metrics for k, r in reports.items()}, delimiter),
        write_metric_table(
            out / "metrics_in_sample.csv", {k: r.in_sample_metrics for k, r in reports.items()}, delimiter
        ),
    ]

    weight_rows = []
    diag_rows = []
    win_rows = []
    for k, r in reports.items():
        for w in r.per_window:
            for t, v in zip(r.tickers, w.weights.weights):
                weight_rows.append((k, w.window, t, float(v)))
            d = w.diagnostics
            diag_rows.append(
                (k, w.window, d.objective_value, d.kkt_residual, d.iterations, d.converged,
                 w.nonzero, " ".join(fmt(p) for p in w.params))
            )
        for i, s in enumerate(r.window_metrics(alpha, risk_free)):
            win_rows.append([k, i] + [getattr(s, n) for n in MetricSuite.names()])
    written.append(write_rows(out / "weights.csv", ("model", "window", "ticker", "weight"), weight_rows, delimiter))
    written.append(write_rows(
        out / "diagnostics.csv",
        ("model", "window", "objective", "kkt_residual", "iterations", "converged", "nonzero", "params"),
        diag_rows, delimiter,
    ))
    written.append(write_rows(out / "window_metrics.csv", ["model", "window"] + MetricSuite.names(), win_rows, delimiter))

    same_dates = all(r.oos_dates == first.oos_dates for r in reports.values())
    if same_dates:
        series = list(zip(first.oos_dates, first.index_oos, *[reports[k].oos_returns for k in kinds]))
        written.append(write_rows(out / "oos_returns.csv", ["date", "index"] + kinds, series, delimiter))
        dates = ("start",) + first.oos_dates
        wealth = list(zip(dates, first.index_wealth, *[reports[k].wealth_curve for k in kinds]))
        written.append(write_rows(out / "wealth.csv", ["date", "index"] + kinds, wealth, delimiter))
    else:
        for k in kinds:
            r = reports[k]
            written.append(write_rows(
                out / f"oos_returns_{k}.csv", ("date", "index", k),
                zip(r.oos_dates, r.index_oos, r.oos_returns), delimiter,
            ))
            written.append(write_rows(
                out / f"wealth_{k}.csv", ("date", "index", k),
                zip(("start",) + r.oos_dates, r.index_wealth, r.wealth_curve), delimiter,
            ))
    return written


def write_manifest(path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
