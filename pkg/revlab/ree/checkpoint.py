"""
revlab/ree/checkpoint.py — Resumable snapshots of a fixed-point run.

A checkpoint is a compressed .npz holding the signal nodes, the price nodes,
every agent's posterior table, the current price tensor (log-odds) and the
residual history, plus a JSON header with the format version.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from revlab.errors import InvalidInputError
from shared.logger import get_logger

log = get_logger("revlab.ree.checkpoint")

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Checkpoint:
    u_nodes: np.ndarray
    p_log_nodes: np.ndarray
    tables: np.ndarray          # (K_tables, G_u, G_p) log-odds
    price_log_odds: np.ndarray  # (G, G, G)
    iteration: int
    history: list[tuple[int, str, float]]
    meta: dict


def save_checkpoint(path: str | Path, *, u_nodes: np.ndarray, p_log_nodes: np.ndarray,
                    tables: np.ndarray, price_log_odds: np.ndarray, iteration: int,
                    history: list[tuple[int, str, float]], meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {"version": CHECKPOINT_VERSION, "iteration": int(iteration), **(meta or {})}
    hist = np.array([(i, r) for i, _, r in history], dtype=float).reshape(-1, 2)
    phases = np.array([ph for _, ph, _ in history], dtype="U16")
    with path.open("wb") as fh:
        np.savez_compressed(
            fh,
            header=np.array(json.dumps(header, sort_keys=True)),
            u_nodes=u_nodes, p_log_nodes=p_log_nodes, tables=tables,
            price_log_odds=price_log_odds, history=hist, phases=phases,
        )
    log.debug("checkpoint written: %s (iteration %d)", path, iteration)
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise InvalidInputError("checkpoint not found", path=str(path))
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        if header.get("version") != CHECKPOINT_VERSION:
            raise InvalidInputError("unsupported checkpoint version",
                                    version=header.get("version"), expected=CHECKPOINT_VERSION)
        history = [(int(i), str(ph), float(r))
                   for (i, r), ph in zip(data["history"], data["phases"])]
        return Checkpoint(
            u_nodes=data["u_nodes"].copy(),
            p_log_nodes=data["p_log_nodes"].copy(),
            tables=data["tables"].copy(),
            price_log_odds=data["price_log_odds"].copy(),
            iteration=int(header["iteration"]),
            history=history,
            meta=header,
        )
