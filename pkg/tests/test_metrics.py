import math

import numpy as np
import pytest

from oracles import loop_var_cvar
from topotrack.metrics import (
    correlation,
    downside_deviation,
    metric_suite,
    sharpe_ir,
    tracking_error,
    turnover,
    var_cvar,
)


def test_tracking_error_examples():
    assert tracking_error([0.1, 0.2], [0.1, 0.2]) == 0.0
    assert tracking_error([0.01, -0.01], [0.0, 0.0]) == pytest.approx(0.014142135623730951, rel=1e-15)


def test_downside_examples():
    assert downside_deviation([0.02, 0.03], [0.01, 0.03]) == 0.0
    assert downside_deviation([0.0], [0.02]) == 0.02


def test_var_examples():
    assert var_cvar([-0.02, -0.01, 0.0, 0.01, 0.02], 0.8) == (0.02, 0.02)
    assert var_cvar([0.01] * 7, 0.95) == (-0.01, -0.01)


def test_var_against_sorting_oracle():
    x = np.random.default_rng(0).standard_t(4, 1000) * 0.01
    var, cvar = var_cvar(x, 0.95)
    ref_var, ref_cvar = loop_var_cvar(x.tolist(), 0.95)
    assert var == ref_var
    assert cvar == pytest.approx(ref_cvar, rel=1e-12)


def test_var_rejects_bad_alpha():
    with pytest.raises(ValueError):
        var_cvar([0.1], 1.0)


def test_sharpe_examples():
    shr, ir, emr = sharpe_ir([-0.01, -0.02, 0.0], [0.0, 0.0, 0.0])
    assert shr == 0.0
    r = [0.01, -0.02, 0.03]
    assert sharpe_ir(r, r)[1:] == (0.0, 0.0)


def test_turnover_examples():
    assert turnover([[0.5, 0.5]] * 4) == 0.0
    assert turnover([[1.0, 0.0], [0.0, 1.0]]) == 2.0


def test_correlation_of_identical_series_is_one():
    x = np.random.default_rng(1).normal(size=50)
    assert correlation(x, x) == 1.0
    assert correlation(np.ones(5), x[:5]) == 0.0


def test_suite_fields_and_asset_count():
    rng = np.random.default_rng(2)
    q = rng.normal(0, 0.01, 60)
    p = q + rng.normal(0, 1e-3, 60)
    hist = [np.array([0.5, 0.5, 0.0]), np.array([0.2, 0.3, 0.5])]
    s = metric_suite(p, q, hist, alpha=0.9)
    assert s.mean_assets == 2.5
    assert s.tr == pytest.approx(1.0)
    assert s.terror == tracking_error(p, q)
    assert all(math.isfinite(v) for v in s.as_dict().values())
