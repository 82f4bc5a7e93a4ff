from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from revlab.errors import InvalidInputError
from revlab.ree.checkpoint import CHECKPOINT_VERSION, load_checkpoint, save_checkpoint


def _save(path: Path) -> Path:
    return save_checkpoint(
        path,
        u_nodes=np.linspace(-4, 4, 5),
        p_log_nodes=np.linspace(-3, 3, 6),
        tables=np.arange(30.0).reshape(1, 5, 6),
        price_log_odds=np.full((5, 5, 5), 0.25),
        iteration=12,
        history=[(0, "picard", 1.0), (1, "picard", 0.5), (2, "newton", 1e-6)],
        meta={"taus": [2.0, 2.0, 2.0]},
    )


def test_checkpoint_restores_state_and_history(tmp_path: Path) -> None:
    ck = load_checkpoint(_save(tmp_path / "run" / "state.npz"))
    assert ck.iteration == 12
    assert ck.history[-1] == (2, "newton", 1e-6)
    assert ck.tables.shape == (1, 5, 6)
    np.testing.assert_array_equal(ck.price_log_odds, 0.25)
    assert ck.meta["taus"] == [2.0, 2.0, 2.0]
    assert ck.meta["version"] == CHECKPOINT_VERSION


def test_missing_checkpoint_raises(tmp_path: Path) -> None:
    with pytest.raises(InvalidInputError):
        load_checkpoint(tmp_path / "nope.npz")


def test_foreign_version_is_refused(tmp_path: Path) -> None:
    path = tmp_path / "old.npz"
    with path.open("wb") as fh:
        np.savez(fh, header=np.array(json.dumps({"version": CHECKPOINT_VERSION + 1})))
    with pytest.raises(InvalidInputError):
        load_checkpoint(path)
