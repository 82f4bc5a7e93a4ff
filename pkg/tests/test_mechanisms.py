from __future__ import annotations

import pytest

from revlab.errors import InvalidConfigError
from revlab.grid import make_grid
from revlab.mechanisms import (
    BASELINE,
    ORDERING,
    MechanismConfig,
    baseline,
    ordering_check,
    run_mechanism,
)


def test_rows_need_three_groups() -> None:
    with pytest.raises(InvalidConfigError):
        MechanismConfig("short", (1, 1), (1, 1))
    with pytest.raises(InvalidConfigError):
        MechanismConfig("bad-kind", (1, 1, 1), (1, 1, 1), kind="hara")
    with pytest.raises(InvalidConfigError):
        MechanismConfig("bad-mode", (1, 1, 1), (1, 1, 1), learning="oracle")


def test_baseline_lookup() -> None:
    row = baseline("het-tau")
    assert row.taus == (1.0, 3.0, 10.0)
    assert row.risks == (1.8, 1.8, 1.8)
    assert row.market().taus.tolist() == [1.0, 3.0, 10.0]
    assert baseline("het-alpha-cara").market().all_cara
    assert {r.label for r in BASELINE} >= set(ORDERING)
    with pytest.raises(InvalidConfigError):
        baseline("nope")


def test_with_learning_switches_only_the_mode() -> None:
    row = baseline("opposed").with_learning("ree")
    assert row.learning == "ree"
    assert row.risks == baseline("opposed").risks


def test_ordering_check_on_ranked_values() -> None:
    values = {"pure-jensen": 0.01, "het-tau": 0.05, "het-gamma": 0.2,
              "aligned": 0.1, "opposed": 0.3, "extreme-opposed": 0.5}
    assert ordering_check(values).holds
    values["het-gamma"] = 0.01
    verdict = ordering_check(values)
    assert not verdict.holds
    assert verdict.failures() == [("het-tau", "het-gamma")]


def test_ordering_check_needs_every_row() -> None:
    with pytest.raises(InvalidConfigError):
        ordering_check({"pure-jensen": 0.1})


def test_dispersed_precision_under_cara_reveals_fully() -> None:
    row = MechanismConfig("cara-het-tau", (1, 1, 1), (1, 3, 10), kind="cara")
    assert run_mechanism(row, make_grid(7)).deficit < 1e-10


def test_curvature_alone_leaves_a_deficit() -> None:
    assert run_mechanism(baseline("pure-jensen"), make_grid(7)).deficit > 1e-4


@pytest.fixture(scope="module")
def baseline_deficits() -> dict[str, float]:
    grid = make_grid(20)
    return {row.label: run_mechanism(row, grid).deficit for row in BASELINE}


@pytest.mark.parametrize("label, deficit", [
    ("pure-jensen", 0.011), ("het-gamma", 0.247), ("het-tau", 0.082),
    ("aligned", 0.100), ("opposed", 0.211), ("extreme-opposed", 0.604),
])
def test_baseline_no_learning_levels(baseline_deficits, label: str, deficit: float) -> None:
    assert baseline_deficits[label] == pytest.approx(deficit, abs=0.01)


def test_baseline_ordering_holds(baseline_deficits) -> None:
    verdict = ordering_check(baseline_deficits)
    assert verdict.holds, verdict.failures()


def test_dispersed_cara_risk_aversion_hides_information(baseline_deficits) -> None:
    assert baseline_deficits["het-alpha-cara"] > 0.01


@pytest.mark.slow
def test_baseline_ordering_holds_with_learning() -> None:
    grid = make_grid(20)
    rows = [row.with_learning("ree") for row in BASELINE if row.kind == "crra"]
    verdict = ordering_check({row.label: run_mechanism(row, grid).deficit for row in rows})
    assert verdict.holds, verdict.failures()
