from __future__ import annotations

import numpy as np
import pytest

from revlab.clearing import MarketConfig, no_learning_price_tensor
from revlab.errors import DegenerateRegressionError, InvalidInputError
from revlab.metrics import (
    SolverStatus,
    count_monotone_violations,
    diagnostics,
    expected_volume,
    jensen_series,
    revelation_deficit,
    trade_volume,
    weighted_regression,
)
from revlab.grid import make_grid
from revlab.preferences import Preference


def test_regression_recovers_an_exact_line() -> None:
    x = np.linspace(-2, 2, 11)
    rep = weighted_regression(x, 0.5 * x + 1.0, np.full(x.size, 1.0 / x.size))
    assert rep.slope == pytest.approx(0.5)
    assert rep.intercept == pytest.approx(1.0)
    assert rep.deficit == pytest.approx(0.0, abs=1e-12)


def test_regression_with_constant_response_is_degenerate() -> None:
    x = np.linspace(-2, 2, 11)
    with pytest.raises(DegenerateRegressionError):
        weighted_regression(x, np.ones_like(x), np.ones_like(x))


def test_cara_no_learning_price_reveals_everything(cara_market, grid9) -> None:
    rep = revelation_deficit(no_learning_price_tensor(cara_market, grid9), grid9, cara_market.taus)
    assert rep.deficit < 1e-10
    assert rep.slope == pytest.approx(1.0 / 3.0, abs=1e-9)


def test_crra_no_learning_price_leaves_a_deficit(crra_market, grid9) -> None:
    rep = revelation_deficit(no_learning_price_tensor(crra_market, grid9), grid9, crra_market.taus)
    assert rep.deficit > 1e-3
    assert 0.0 < rep.r2 < 1.0


def test_deficit_shrinks_with_risk_aversion(grid9) -> None:
    def deficit(gamma: float) -> float:
        cfg = MarketConfig.homogeneous(Preference.crra(gamma), 2.0)
        return revelation_deficit(no_learning_price_tensor(cfg, grid9), grid9, cfg.taus).deficit

    assert deficit(0.5) > deficit(3.0)


def test_deficit_rejects_mismatched_tensor(grid9) -> None:
    with pytest.raises(InvalidInputError):
        revelation_deficit(np.full((8, 8, 8), 0.5), grid9, [1.0, 1.0, 1.0])
    with pytest.raises(InvalidInputError):
        revelation_deficit(np.ones((9, 9, 9)), grid9, [1.0, 1.0, 1.0])


def test_trade_volume_is_half_the_absolute_sum() -> None:
    assert trade_volume([1.0, -0.5, -0.5]) == pytest.approx(1.0)


def test_expected_no_learning_volume_is_positive(crra_market, grid9) -> None:
    assert expected_volume(crra_market, grid9, None) > 0.0
    with pytest.raises(InvalidInputError):
        expected_volume(crra_market, grid9, None, source="oracle")


def test_expected_volume_at_the_crra_equilibrium(crra_market) -> None:
    grid = make_grid(6)
    assert expected_volume(crra_market, grid, None, source="ree") > 0.0


def test_monotone_violations_count_both_axes() -> None:
    table = np.array([[0.0, 1.0, 2.0],
                      [1.0, 0.5, 3.0]])
    # one drop along p in row 1, one drop along u in column 1
    assert count_monotone_violations(table) == 2
    assert count_monotone_violations(np.stack([table, table])) == 4
    assert count_monotone_violations(np.arange(6.0).reshape(2, 3)) == 0


def test_diagnostics_classify_strict_fallback_and_diverged() -> None:
    table = np.arange(6.0).reshape(2, 3)
    assert diagnostics(np.zeros((2, 3)), table, strict_tol=1e-12).status is SolverStatus.STRICT
    assert diagnostics(np.full((2, 3), 1e-3), table, strict_tol=1e-12).status is SolverStatus.FALLBACK
    assert diagnostics(np.zeros((2, 3)), table, diverged=True).status is SolverStatus.DIVERGED


def test_diagnostics_ignore_inactive_nodes() -> None:
    residual = np.array([[0.0, 5.0], [0.0, 0.0]])
    active = np.array([[True, False], [True, True]])
    report = diagnostics(residual, np.zeros((2, 2)), active, strict_tol=1e-12)
    assert report.residual_inf == 0.0
    assert report.active_cells == 3


def test_jensen_remainder_scales_with_fifth_power() -> None:
    rows = {r["tau"]: r for r in jensen_series([0.01, 0.02], (1.0, 0.0, 0.0))}
    ratio = rows[0.02]["remainder"] / rows[0.01]["remainder"]
    assert 25.6 <= ratio <= 40.0


@pytest.mark.parametrize("gamma, tau, deficit", [
    (0.5, 2.0, 0.0620), (1.0, 2.0, 0.0295), (0.1, 0.5, 0.1463), (3.0, 2.0, 0.0057),
])
def test_no_learning_deficit_on_the_full_lattice(gamma: float, tau: float, deficit: float) -> None:
    grid = make_grid(20)
    cfg = MarketConfig.homogeneous(Preference.crra(gamma), tau)
    rep = revelation_deficit(no_learning_price_tensor(cfg, grid), grid, cfg.taus)
    assert rep.deficit == pytest.approx(deficit, abs=0.005)
