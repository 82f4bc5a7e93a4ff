from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from revlab.clearing import MarketConfig, PriceTensor, no_learning_price_tensor, permutation_spread
from revlab.errors import InvalidConfigError, InvalidInputError
from revlab.grid import lattice_statistic, logistic, make_grid
from revlab.metrics import SolverStatus, revelation_deficit
from revlab.preferences import AgentGroup, Preference
from revlab.ree import (
    ContourMap,
    SolverConfig,
    apply_map,
    contour_curvature_report,
    fully_revealing_price,
    posteriors_at,
    price_grid,
    price_nodes_for,
    price_posterior,
    private_tables,
    solve_fully_revealing,
    solve_ree,
    symmetrise,
)
from shared.config import settings

FAST = SolverConfig(strict_tol=1e-10)


def _contour_map(cfg, grid, price) -> ContourMap:
    lP = price.log_odds
    nodes = price_grid([(float(lP.min()), float(lP.max()))], grid.size)
    return ContourMap(cfg, grid, FAST, nodes)


# ── configuration ────────────────────────────────────────────────────────────

def test_solver_config_validates_its_fields() -> None:
    with pytest.raises(InvalidConfigError):
        SolverConfig(damping=0.0)
    with pytest.raises(InvalidConfigError):
        SolverConfig(strict_tol=-1.0)
    with pytest.raises(InvalidConfigError):
        SolverConfig(price_grid_rule="chebyshev")


def test_from_settings_ignores_none_and_rejects_unknown_options() -> None:
    assert SolverConfig.from_settings(damping=None).damping == settings.damping
    assert SolverConfig.from_settings(damping=0.5).damping == 0.5
    with pytest.raises(InvalidConfigError):
        SolverConfig.from_settings(relaxation=0.5)


def test_only_three_group_markets_are_supported(grid9) -> None:
    cfg = MarketConfig.homogeneous(Preference.cara(1.0), 2.0, K=2)
    with pytest.raises(InvalidConfigError):
        solve_ree(cfg, grid9)


# ── symmetrisation ───────────────────────────────────────────────────────────

def test_symmetrise_is_exactly_symmetric() -> None:
    rng = np.random.default_rng(3)
    out = symmetrise(rng.normal(size=(5, 5, 5)))
    assert permutation_spread(out) == 0.0


def test_symmetrise_keeps_symmetric_tensors(cara_market, grid9) -> None:
    price = fully_revealing_price(cara_market, grid9)
    out = symmetrise(price)
    assert isinstance(out, PriceTensor)
    np.testing.assert_allclose(out.log_odds, price.log_odds, atol=1e-13)


def test_symmetrise_refuses_heterogeneous_groups() -> None:
    cfg = MarketConfig(tuple(AgentGroup(Preference.cara(1.0), t) for t in (1.0, 2.0, 3.0)))
    with pytest.raises(InvalidConfigError):
        symmetrise(np.zeros((3, 3, 3)), cfg)


# ── CARA: the map lands on the fully revealing price ─────────────────────────

def test_fully_revealing_price_is_a_fixed_point(cara_market, grid9) -> None:
    fr = fully_revealing_price(cara_market, grid9)
    cm = _contour_map(cara_market, grid9, fr)
    assert np.max(np.abs(cm(fr.log_odds) - fr.log_odds)) < 1e-10


def test_one_map_application_from_no_learning_reveals_everything(cara_market, grid9) -> None:
    nl = no_learning_price_tensor(cara_market, grid9)
    cm = _contour_map(cara_market, grid9, nl)
    image = cm(nl.log_odds)
    np.testing.assert_allclose(image, lattice_statistic(grid9, cara_market.taus), atol=1e-9)


def test_apply_map_from_private_beliefs(cara_market, grid9) -> None:
    nl = no_learning_price_tensor(cara_market, grid9)
    cm = _contour_map(cara_market, grid9, nl)
    tables = private_tables(cara_market, grid9, cm.p_log_nodes)
    out = apply_map(tables, nl, cara_market, grid9, FAST, contour_map=cm)
    # clearing at private beliefs reproduces the no-learning price ...
    np.testing.assert_allclose(out.price.log_odds, nl.log_odds, atol=1e-10)
    # ... and inverting that price infers the pooled statistic, 3·logit p
    inferred = out.tables[0]
    active = inferred.active
    expected = np.broadcast_to(3.0 * cm.p_log_nodes, inferred.shape)
    np.testing.assert_allclose(inferred.log_odds[active], expected[active], atol=1e-9)


def test_apply_map_at_the_revealing_price_has_no_residual(cara_market, grid9) -> None:
    fr = fully_revealing_price(cara_market, grid9)
    cm = _contour_map(cara_market, grid9, fr)
    identity = cm.posterior_tables(fr.log_odds)
    out = apply_map(identity, fr, cara_market, grid9, FAST, contour_map=cm)
    assert out.residual_inf < 1e-10
    assert out.flagged_cells == 0


def test_cara_solve_converges_to_full_revelation(cara_market, grid9) -> None:
    sol = solve_ree(cara_market, grid9, FAST)
    assert sol.diagnostics.status is SolverStatus.STRICT
    assert sol.diagnostics.mono_violations == 0
    assert sol.regression().deficit < 1e-10
    np.testing.assert_allclose(sol.price.log_odds, lattice_statistic(grid9, cara_market.taus),
                               atol=1e-8)
    table, price, diag = sol
    assert table is sol.table and diag is sol.diagnostics


def test_fully_revealing_seed_needs_no_iterations(cara_market, grid9) -> None:
    sol = solve_ree(cara_market, grid9, FAST, seed="fully-revealing")
    assert sol.iterations == 0
    assert sol.diagnostics.status is SolverStatus.STRICT


def test_unknown_seed_is_rejected(cara_market, grid9) -> None:
    with pytest.raises(InvalidConfigError):
        solve_ree(cara_market, grid9, FAST, seed="rational")


# ── read-outs ────────────────────────────────────────────────────────────────

def test_revealing_posteriors_at_mixed_signals(cara_market, grid9) -> None:
    sol = solve_fully_revealing(cara_market, grid9, FAST)
    *mus, price = posteriors_at(sol, (1.0, -1.0, 1.0))
    target = float(logistic(2.0))
    assert price == pytest.approx(target, abs=1e-9)
    np.testing.assert_allclose(mus, target, atol=1e-9)
    assert target == pytest.approx(0.881, abs=5e-4)


def test_posteriors_at_needs_one_signal_per_group(cara_market, grid9) -> None:
    sol = solve_fully_revealing(cara_market, grid9, FAST)
    with pytest.raises(InvalidInputError):
        posteriors_at(sol, (1.0, 0.0))


def test_price_only_posterior_of_a_revealing_price_is_the_price(cara_market, grid9) -> None:
    pp = price_posterior(fully_revealing_price(cara_market, grid9), cara_market, grid9)
    assert pp.active.any()
    np.testing.assert_allclose(pp.log_odds[pp.active], pp.p_log_nodes[pp.active], atol=1e-9)


def test_supply_shifts_the_revealing_price(grid9) -> None:
    cfg = MarketConfig.homogeneous(Preference.cara(1.0), 2.0, supply=0.6)
    price = fully_revealing_price(cfg, grid9)
    np.testing.assert_allclose(price.log_odds, lattice_statistic(grid9, cfg.taus) - 0.2,
                               atol=1e-10)


def test_beliefs_cover_every_group_and_cell(cara_market, grid9) -> None:
    sol = solve_fully_revealing(cara_market, grid9, FAST)
    beliefs = sol.beliefs()
    assert beliefs.log_odds.shape == (3, 9, 9, 9)
    np.testing.assert_allclose(beliefs.log_odds[1], sol.price.log_odds, atol=1e-9)


# ── curvature ────────────────────────────────────────────────────────────────

def test_cara_level_sets_are_straight_lines(cara_market, grid9) -> None:
    price = no_learning_price_tensor(cara_market, grid9)
    report = contour_curvature_report(price, grid9, 4, (0.3, 0.5, 0.7))
    assert [lc.sign for lc in report.levels] == ["linear"] * 3
    assert report.critical_level is None
    assert len(report.as_rows()) == 3


def test_curvature_skips_levels_without_enough_crossings(cara_market, grid9) -> None:
    price = no_learning_price_tensor(cara_market, grid9)
    report = contour_curvature_report(price, grid9, 4, (1e-6,))
    assert report.levels[0].sign == "skipped"


# ── CRRA and resumption ──────────────────────────────────────────────────────

def test_short_crra_solve_keeps_the_price_symmetric(crra_market) -> None:
    grid = make_grid(7)
    sol = solve_ree(crra_market, grid, SolverConfig(anderson_memory=0, max_iter=15,
                                                    strict_tol=1e-8, newton=False))
    assert sol.diagnostics.status is not SolverStatus.DIVERGED
    assert np.all(np.isfinite(sol.price.log_odds))
    assert permutation_spread(sol.price.log_odds) < 1e-12
    assert [phase for _, phase, _ in sol.history] == ["picard"] * len(sol.history)


def test_checkpoint_then_resume(cara_market, grid9, tmp_path: Path) -> None:
    path = tmp_path / "ree.npz"
    cfg = SolverConfig(strict_tol=1e-10, checkpoint_path=str(path), checkpoint_every=1)
    first = solve_ree(cara_market, grid9, cfg)
    assert path.exists()
    resumed = solve_ree(cara_market, grid9, FAST, resume_from=path)
    assert resumed.diagnostics.status is SolverStatus.STRICT
    assert len(resumed.history) > len(first.history)
    with pytest.raises(InvalidInputError):
        solve_ree(cara_market, make_grid(7), FAST, resume_from=path)


def test_resume_refuses_a_checkpoint_for_other_precisions(cara_market, grid9,
                                                          tmp_path: Path) -> None:
    path = tmp_path / "ree.npz"
    solve_ree(cara_market, grid9, SolverConfig(strict_tol=1e-10, checkpoint_path=str(path)))
    other = MarketConfig.homogeneous(Preference.cara(1.0), 3.0)
    with pytest.raises(InvalidInputError):
        solve_ree(other, grid9, FAST, resume_from=path)


def test_resume_refuses_a_checkpoint_for_other_preferences(cara_market, crra_market, grid9,
                                                           tmp_path: Path) -> None:
    path = tmp_path / "ree.npz"
    solve_ree(cara_market, grid9, SolverConfig(strict_tol=1e-10, checkpoint_path=str(path)))
    with pytest.raises(InvalidInputError):
        solve_ree(crra_market, grid9, FAST, resume_from=path)


def test_cara_stops_on_the_posterior_residual(cara_market, grid9) -> None:
    # no-learning tables are already exact under CARA; the cleared price is T⋆
    sol = solve_ree(cara_market, grid9, FAST)
    assert sol.iterations == 0
    assert sol.history[0][2] < FAST.strict_tol
    np.testing.assert_allclose(sol.price.log_odds, lattice_statistic(grid9, cara_market.taus),
                               atol=1e-8)


def test_price_nodes_span_seed_and_revealing_prices(crra_market) -> None:
    grid = make_grid(7)
    nl = no_learning_price_tensor(crra_market, grid).log_odds
    fr = fully_revealing_price(crra_market, grid).log_odds
    nodes = price_nodes_for(crra_market, grid, FAST, nl)
    assert nodes.size == 13
    assert nodes[0] <= min(nl.min(), fr.min())
    assert nodes[-1] >= max(nl.max(), fr.max())


def test_small_crra_solve_learns_from_the_price(crra_market) -> None:
    grid = make_grid(8)
    sol = solve_ree(crra_market, grid, SolverConfig(max_iter=80, strict_tol=1e-10))
    nl = revelation_deficit(no_learning_price_tensor(crra_market, grid), grid, crra_market.taus)
    assert sol.diagnostics.status is not SolverStatus.DIVERGED
    assert sol.diagnostics.residual_inf < 1e-4
    assert sol.regression().deficit > nl.deficit


# ── reference values (full lattice) ──────────────────────────────────────────

REFERENCE = [(0.5, 0.088, 0.523), (1.0, 0.047, 0.550), (2.0, 0.025, 0.586), (4.0, 0.016, 0.605)]


@pytest.fixture(scope="module")
def crra_solutions() -> dict[float, object]:
    return {gamma: solve_ree(MarketConfig.homogeneous(Preference.crra(gamma), 2.0), make_grid(20))
            for gamma, _, _ in REFERENCE}


@pytest.mark.slow
@pytest.mark.parametrize("gamma, deficit, slope", REFERENCE)
def test_crra_ree_deficit_and_slope(crra_solutions, gamma: float, deficit: float,
                                    slope: float) -> None:
    sol = crra_solutions[gamma]
    rep = sol.regression()
    assert sol.diagnostics.status is SolverStatus.STRICT
    assert rep.deficit == pytest.approx(deficit, abs=0.008)
    assert rep.slope == pytest.approx(slope, abs=0.04)


@pytest.mark.slow
def test_crra_ree_deficit_falls_with_risk_aversion(crra_solutions) -> None:
    deficits = [crra_solutions[gamma].regression().deficit for gamma, _, _ in REFERENCE]
    assert all(a > b for a, b in zip(deficits, deficits[1:]))


@pytest.mark.slow
def test_crra_ree_deficit_exceeds_the_no_learning_deficit(crra_solutions) -> None:
    grid = make_grid(20)
    for gamma, sol in crra_solutions.items():
        cfg = MarketConfig.homogeneous(Preference.crra(gamma), 2.0)
        nl = revelation_deficit(no_learning_price_tensor(cfg, grid), grid, cfg.taus)
        assert sol.regression().deficit >= nl.deficit


@pytest.mark.slow
def test_crra_ree_posteriors_at_mixed_signals(crra_solutions) -> None:
    mu1, mu2, mu3, price = posteriors_at(crra_solutions[0.5], (1.0, -1.0, 1.0))
    assert mu2 == pytest.approx(0.667, abs=0.02)
    assert price == pytest.approx(0.794, abs=0.02)
    assert mu1 == pytest.approx(mu3, abs=1e-9)
    assert mu1 == pytest.approx(0.883, abs=0.01)


@pytest.mark.slow
def test_crra_ree_deficit_is_settled_on_the_lattice(crra_solutions) -> None:
    cfg = MarketConfig.homogeneous(Preference.crra(0.5), 2.0)
    coarse = solve_ree(cfg, make_grid(18)).regression().deficit
    assert abs(coarse - crra_solutions[0.5].regression().deficit) < 0.005
