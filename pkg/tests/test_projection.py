from __future__ import annotations

import numpy as np
import pytest

from revlab.metrics import count_monotone_violations
from revlab.ree.projection import PosteriorTable, fill_inactive, price_grid, project_monotone


def _table(values: np.ndarray) -> PosteriorTable:
    G_u, G_p = values.shape
    return PosteriorTable(log_odds=values, u_nodes=np.linspace(-1, 1, G_u),
                          p_log_nodes=np.linspace(-2, 2, G_p))


def test_price_grid_pads_the_range_by_ten_percent() -> None:
    np.testing.assert_allclose(price_grid([(-1.0, 1.0)], 5), np.linspace(-1.2, 1.2, 5))
    nodes = price_grid([(-3.0, 0.5), (-1.0, 2.0)], 7)
    assert nodes[0] == pytest.approx(-3.5)
    assert nodes[-1] == pytest.approx(2.5)


def test_probability_rule_shares_end_nodes_and_is_increasing() -> None:
    a = price_grid([(-2.0, 2.0)], 9, "uniform-logit")
    b = price_grid([(-2.0, 2.0)], 9, "uniform-prob")
    assert np.all(np.diff(b) > 0)
    assert b[0] == pytest.approx(a[0])
    assert b[-1] == pytest.approx(a[-1])
    with pytest.raises(ValueError):
        price_grid([(-2.0, 2.0)], 9, "chebyshev")


def test_flat_range_still_gives_distinct_nodes() -> None:
    nodes = price_grid([(0.3, 0.3)], 5)
    assert np.all(np.diff(nodes) > 0)


def test_fill_extends_active_nodes_linearly() -> None:
    p = np.linspace(-2, 2, 5)
    raw = np.array([[np.nan, 1.0, 2.0, np.nan, np.nan],
                    [np.nan, np.nan, 3.0, np.nan, np.nan],
                    [np.nan] * 5])
    active = ~np.isnan(raw)
    out = fill_inactive(np.nan_to_num(raw), active, p, np.array([9.0, 9.0, -7.0]))
    np.testing.assert_allclose(out[0], [0.0, 1.0, 2.0, 3.0, 4.0])
    np.testing.assert_allclose(out[1], 3.0)
    np.testing.assert_allclose(out[2], -7.0)


def test_fill_interpolates_interior_gaps() -> None:
    p = np.linspace(0, 4, 5)
    raw = np.array([[0.0, 0.0, 0.0, 0.0, 4.0]])
    active = np.array([[True, False, False, False, True]])
    np.testing.assert_allclose(fill_inactive(raw, active, p, np.zeros(1))[0], p)


def test_projection_pools_a_decreasing_pair() -> None:
    projected = project_monotone(_table(np.array([[1.0, 0.0], [2.0, 3.0]])))
    np.testing.assert_allclose(projected.log_odds, [[0.5, 0.5], [2.0, 3.0]])
    assert projected.violations() == 0


def test_projection_of_noise_is_monotone_in_price_and_fewer_violations() -> None:
    rng = np.random.default_rng(7)
    raw = rng.normal(size=(6, 8))
    projected = project_monotone(_table(raw))
    assert np.all(np.diff(projected.log_odds, axis=1) >= -1e-14)
    assert count_monotone_violations(projected.log_odds) < count_monotone_violations(raw)


def test_projection_leaves_monotone_tables_alone() -> None:
    values = np.add.outer(np.arange(4.0), 0.5 * np.arange(6.0))
    projected = project_monotone(_table(values), u_weights=np.full(4, 0.25))
    np.testing.assert_array_equal(projected.log_odds, values)


def test_lookup_is_linear_in_logit_price_and_extends_past_the_ends() -> None:
    p = np.linspace(-2, 2, 5)
    table = PosteriorTable(log_odds=np.tile(2.0 * p, (3, 1)), u_nodes=np.arange(3.0),
                           p_log_nodes=p)
    lp = np.array([-3.0, -0.5, 0.25, 2.0, 5.0])
    np.testing.assert_allclose(table.at(np.ones(5, dtype=int), lp), 2.0 * lp, atol=1e-12)


def test_interpolator_matches_node_values() -> None:
    values = np.add.outer(np.arange(3.0), np.arange(5.0))
    table = _table(values)
    got = table.interpolator()([[table.u_nodes[1], table.p_log_nodes[3]]])
    assert got[0] == pytest.approx(values[1, 3])
