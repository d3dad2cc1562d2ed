"""Run configuration: defaults, JSON file, and command-line overrides.

Precedence is flag > file > built-in default.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from . import penalty as pen
from .backtest import BacktestConfig, WindowPlan
from .solver import SolveOptions


@dataclass(frozen=True)
class RunConfig:
    data: str | None = None
    index_ticker: str = "INDEX"
    start_date: str | None = None
    end_date: str | None = None
    delimiter: str = ","
    # rolling windows (trading days)
    in_sample_days: int = 504
    out_sample_days: int = 21
    step: int = 21
    # penalty learning
    embed_dim: int = 3
    embed_delay: int = 1
    months: int = 6
    sub_len: int = 42
    sub_step: int = 21
    norm_p: float = 1.0
    k_max: int = 1
    models: tuple[str, ...] = pen.KINDS
    var_alpha: float = 0.95
    risk_free: float = 0.0
    retune_per_window: bool = False
    warm_start: bool = True
    exclude_failed: bool = False
    asset_band: float = pen.ASSET_BAND
    vol_grid: tuple[float, ...] = BacktestConfig.vol_grid
    vol_psi_grid: tuple[float, ...] = BacktestConfig.vol_psi_grid
    en_lambda1_grid: tuple[float, ...] = BacktestConfig.en_lambda1_grid
    en_lambda2_grid: tuple[float, ...] = BacktestConfig.en_lambda2_grid
    slope_grid: tuple[float, ...] = BacktestConfig.slope_grid
    slope_shape: str = "linear"
    tolerance: float = 1e-8
    max_iter: int = 100_000
    # `penalties` subcommand
    penalty_kind: str = "TDAEN12"
    window: int = 0
    phi: float = 1.0
    psi: float = 0.0
    lambda1: float = 1e-4
    lambda2: float = 1e-3
    slope_lambda: float = 1e-3
    # `synth` subcommand
    n_assets: int = 50
    k_true: int = 5
    n_days: int = 1500
    noise: float = 5e-4
    # output
    out_dir: str = "out"
    seed: int = 0
    plots: bool = True
    cache_dir: str | None = None

    def __post_init__(self):
        for name in ("models", "vol_grid", "vol_psi_grid", "en_lambda1_grid", "en_lambda2_grid", "slope_grid"):
            val = getattr(self, name)
            if isinstance(val, str):
                val = [v for v in val.split(",") if v.strip()]
            conv = str if name == "models" else float
            object.__setattr__(self, name, tuple(conv(v) for v in val))
        object.__setattr__(self, "models", tuple(pen.canonical_kind(m.strip()) for m in self.models))
        pen.canonical_kind(self.penalty_kind)
        if not 0 < self.var_alpha < 1:
            raise ValueError("var_alpha must lie in (0, 1)")
        if self.step != self.out_sample_days:
            raise ValueError("step must equal out_sample_days")
        self.sub_plan()

    def sub_plan(self) -> pen.SubSeriesPlan:
        return pen.SubSeriesPlan(self.months, self.sub_len, self.sub_step)

    @property
    def embed(self) -> tuple[int, int]:
        return (self.embed_dim, self.embed_delay)

    def window_plan(self, total_days: int) -> WindowPlan:
        return WindowPlan(total_days, self.in_sample_days, self.out_sample_days, self.step)

    def backtest_config(self) -> BacktestConfig:
        return BacktestConfig(
            sub_plan=self.sub_plan(),
            embed=self.embed,
            norm_p=self.norm_p,
            k_max=self.k_max,
            var_alpha=self.var_alpha,
            risk_free=self.risk_free,
            retune_per_window=self.retune_per_window,
            warm_start=self.warm_start,
            exclude_failed=self.exclude_failed,
            asset_band=self.asset_band,
            vol_grid=self.vol_grid,
            vol_psi_grid=self.vol_psi_grid,
            en_lambda1_grid=self.en_lambda1_grid,
            en_lambda2_grid=self.en_lambda2_grid,
            slope_grid=self.slope_grid,
            slope_shape=self.slope_shape,
            options=SolveOptions(self.tolerance, self.max_iter),
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "RunConfig":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(raw, dict):
            raise ValueError(f"{path}: config must be a JSON object")
        return cls().merged(raw)

    def merged(self, overrides: dict) -> "RunConfig":
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


def resolve(config_path=None, overrides: dict | None = None) -> RunConfig:
    base = RunConfig.load(config_path) if config_path else RunConfig()
    return base.merged(overrides or {})
