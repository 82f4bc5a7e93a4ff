from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from revlab.errors import InvalidConfigError
from revlab.experiments import (
    EXPERIMENTS,
    FIGURES,
    RunConfig,
    contour_series,
    emit_figure_series,
    exp_jensen,
    exp_robustness_k,
    price_map_series,
    run_experiment,
    write_table,
)


def test_from_mapping_accepts_hyphenated_keys_and_signal_strings() -> None:
    rc = RunConfig.from_mapping({"experiment": "ree", "max-iter": 5, "u": "1,0,-1"})
    assert rc.max_iter == 5
    assert rc.u == (1.0, 0.0, -1.0)


def test_from_mapping_rejects_unknown_keys() -> None:
    with pytest.raises(InvalidConfigError):
        RunConfig.from_mapping({"experiment": "ree", "temperature": 1})


@pytest.mark.parametrize("overrides", [
    {"experiment": "nope"},
    {"experiment": "ree", "lam": 0.0},
    {"experiment": "ree", "tau": -1.0},
    {"experiment": "ree", "grid": 2},
    {"experiment": "gs", "k": 2},
    {"experiment": "gs", "cost": 0.0},
    {"experiment": "ree", "format": "xml"},
    {"experiment": "ree", "seed_posterior": "random"},
    {"experiment": "figure"},
    {"experiment": "figure", "figure": "scatter"},
    {"experiment": "ree", "damping": 1.5},
])
def test_validate_rejects_bad_runs(overrides: dict) -> None:
    with pytest.raises(InvalidConfigError):
        RunConfig.from_mapping(overrides).validate()


def test_no_learning_allows_other_group_counts() -> None:
    assert RunConfig("no-learning", k=5).validate().k == 5


def test_merged_skips_unset_flags() -> None:
    rc = RunConfig("ree", gamma=2.0).merged({"gamma": None, "tau": 4.0})
    assert (rc.gamma, rc.tau) == (2.0, 4.0)


def test_builders() -> None:
    rc = RunConfig("ree", preference="cara", alpha=2.0, grid=7, supply=0.3)
    assert rc.pref().is_cara
    assert rc.market().supply == 0.3
    assert rc.signal_grid().size == 7
    assert RunConfig("ree", gamma=3.0).pref().label() == "crra(gamma=3)"


def test_every_figure_is_reachable() -> None:
    assert "figure" in EXPERIMENTS
    with pytest.raises(InvalidConfigError):
        emit_figure_series("scatter", RunConfig("figure"))
    assert set(FIGURES) >= {"knife-edge", "value-info", "gs", "convergence", "contours"}


# ── output formatting ────────────────────────────────────────────────────────

def _frame() -> pd.DataFrame:
    return pd.DataFrame({"deficit": [0.0623456789], "residual": [1.23456e-13],
                         "status": ["strict"]})


def test_csv_uses_six_significant_digits_and_scientific_residuals(tmp_path: Path) -> None:
    path = write_table(_frame(), tmp_path / "out" / "t.csv", "csv")
    assert path.read_text(encoding="utf-8") == "deficit,residual,status\n0.0623457,1.235e-13,strict\n"


def test_json_carries_rows_and_summary(tmp_path: Path) -> None:
    frame = _frame()
    frame["slope"] = [np.nan]
    path = write_table(frame, tmp_path / "t.json", "json", {"grid": np.int64(5), "r2": 0.98765432})
    data = json.loads(path.read_text(encoding="utf-8"))
    row = data["rows"][0]
    assert row["deficit"] == 0.0623457
    assert row["residual"] == 1.235e-13
    assert row["slope"] is None
    assert data["summary"] == {"grid": 5, "r2": 0.987654}


# ── experiments ──────────────────────────────────────────────────────────────

def test_jensen_remainder_scales_with_the_cube() -> None:
    result = exp_jensen(RunConfig("jensen"))
    assert 25.6 <= result.summary["remainder_ratio"] <= 40.0
    assert len(result.frame) == 7


def test_no_learning_run_writes_artifact_and_snapshot(tmp_path: Path) -> None:
    rc = RunConfig("no-learning", grid=7, output=str(tmp_path))
    result = run_experiment(rc)
    artifact = Path(result.summary["artifact"])
    assert artifact == tmp_path / "no-learning.json"
    data = json.loads(artifact.read_text(encoding="utf-8"))
    assert data["rows"][0]["G"] == 7
    assert data["rows"][0]["deficit"] > 0
    assert result.status == "ok"
    assert len(list((tmp_path / "runs").glob("run_no-learning_*.json"))) == 1


def test_reruns_are_byte_identical(tmp_path: Path) -> None:
    rc = RunConfig("no-learning", grid=6, format="csv", output=str(tmp_path))
    first = Path(run_experiment(rc).summary["artifact"]).read_bytes()
    second = Path(run_experiment(rc).summary["artifact"]).read_bytes()
    assert first == second


def test_cara_ree_run_is_strict(tmp_path: Path) -> None:
    rc = RunConfig("ree", preference="cara", alpha=1.0, grid=7, tol=1e-10, output=str(tmp_path))
    result = run_experiment(rc)
    assert result.status == "strict"
    assert result.summary["deficit"] < 1e-9


def test_knife_edge_figure_series(tmp_path: Path) -> None:
    rc = RunConfig("figure", figure="knife-edge", grid=5, output=str(tmp_path))
    result = run_experiment(rc)
    text = (tmp_path / "figure_knife-edge.csv").read_text(encoding="utf-8")
    assert text.splitlines()[0] == "x,y,series"
    assert result.summary["points"] == 24
    assert "cara(alpha=1)" in result.summary["series"]


def test_group_count_series() -> None:
    frame = exp_robustness_k(RunConfig("robustness-k", grid=5)).frame
    assert frame["K"].tolist() == [2, 2, 3, 3, 4, 4, 5, 5, 6, 6]
    cara = frame[frame["preference"].str.startswith("cara")]
    crra = frame[frame["preference"].str.startswith("crra")]
    assert (cara["deficit"] < 1e-10).all()
    assert (crra["deficit"] > 0).all()


def test_cara_contours_are_straight_lines() -> None:
    frame = contour_series(RunConfig("contours", grid=9), levels=(0.5,))
    cara = frame[frame["series"] == "cara(alpha=1) p=0.5"]
    assert len(cara) >= 3
    # own signal on node 1: the level set is u_a + u_b = −1
    np.testing.assert_allclose(cara["x"] + cara["y"], -1.0, atol=1e-9)
    assert (frame["series"] == "crra(gamma=0.5) p=0.5").any()


def test_price_map_for_cara() -> None:
    rc = RunConfig("price-map", preference="cara", grid=7, tol=1e-10)
    frame = price_map_series(rc)
    assert set(frame["series"]) == {"no-learning", "ree", "fully-revealing"}
    for name in ("ree", "fully-revealing"):
        part = frame[frame["series"] == name]
        np.testing.assert_allclose(part["y"], part["x"], atol=1e-8)
    nl = frame[frame["series"] == "no-learning"]
    np.testing.assert_allclose(nl["y"], nl["x"] / 3.0, atol=1e-9)
