"""
revlab/ree/projection.py — Posterior tables on the (u, p) lattice.

A PosteriorTable stores one agent's belief as log-odds on G_u signal nodes ×
G_p price nodes (price nodes also in log-odds).  Nodes whose contour came out
empty are filled by linear extrapolation along the price axis, and the
finished table is projected onto the cone of tables nondecreasing in both u
and p by alternating weighted pool-adjacent-violators passes.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.optimize import isotonic_regression

from revlab.grid import logistic
from revlab.metrics import MONOTONE_TOL, count_monotone_violations
from shared.logger import get_logger

log = get_logger("revlab.ree.projection")

MAX_ALTERNATIONS = 10
PRICE_GRID_PAD = 0.10


@dataclass(frozen=True)
class PosteriorTable:
    log_odds: np.ndarray      # (G_u, G_p)
    u_nodes: np.ndarray       # (G_u,)
    p_log_nodes: np.ndarray   # (G_p,) increasing
    active: np.ndarray | None = None

    @property
    def mu(self) -> np.ndarray:
        return logistic(self.log_odds)

    @property
    def p_nodes(self) -> np.ndarray:
        return logistic(self.p_log_nodes)

    @property
    def shape(self) -> tuple[int, int]:
        return self.log_odds.shape

    def violations(self) -> int:
        return count_monotone_violations(self.log_odds)

    def at(self, u_index: np.ndarray, lp: np.ndarray) -> np.ndarray:
        """
        Log-odds belief at own node u_index and log-odds price lp: linear in
        logit p between price nodes, linearly extended beyond the end nodes.
        """
        nodes = self.p_log_nodes
        j = np.clip(np.searchsorted(nodes, lp, side="right") - 1, 0, nodes.size - 2)
        t = (lp - nodes[j]) / (nodes[j + 1] - nodes[j])
        return (1.0 - t) * self.log_odds[u_index, j] + t * self.log_odds[u_index, j + 1]

    def interpolator(self) -> RegularGridInterpolator:
        """Bilinear interpolation in (u, logit p), for off-node queries."""
        return RegularGridInterpolator((self.u_nodes, self.p_log_nodes), self.log_odds,
                                       bounds_error=False, fill_value=None)


# ── Price grid ───────────────────────────────────────────────────────────────

def price_grid(ranges: list[tuple[float, float]], size: int,
               rule: str = "uniform-logit") -> np.ndarray:
    """
    Log-odds price nodes spanning the hull of the given log-odds ranges,
    padded by 10 % on each side.
    """
    lo = min(r[0] for r in ranges)
    hi = max(r[1] for r in ranges)
    if hi - lo < 1e-12:
        lo, hi = lo - 1.0, hi + 1.0
    pad = PRICE_GRID_PAD * (hi - lo)
    lo, hi = lo - pad, hi + pad
    if rule == "uniform-logit":
        return np.linspace(lo, hi, size)
    if rule == "uniform-prob":
        probs = np.linspace(logistic(lo), logistic(hi), size)
        return np.log(probs) - np.log1p(-probs)
    raise ValueError(f"unknown price grid rule: {rule}")


# ── Filling and projection ───────────────────────────────────────────────────

def fill_inactive(log_odds: np.ndarray, active: np.ndarray, p_log_nodes: np.ndarray,
                  fallback: np.ndarray) -> np.ndarray:
    """
    Complete each u row: interior gaps by linear interpolation between active
    nodes, ends by linear extrapolation from the two nearest active nodes.
    Rows with fewer than two active nodes take fallback[row] (constant).
    """
    out = np.array(log_odds, dtype=float)
    for i in range(out.shape[0]):
        idx = np.nonzero(active[i])[0]
        if idx.size < 2:
            out[i] = out[i, idx[0]] if idx.size == 1 else fallback[i]
            continue
        x, y = p_log_nodes[idx], out[i, idx]
        row = np.interp(p_log_nodes, x, y)
        below = p_log_nodes < x[0]
        above = p_log_nodes > x[-1]
        slope_lo = (y[1] - y[0]) / (x[1] - x[0])
        slope_hi = (y[-1] - y[-2]) / (x[-1] - x[-2])
        row[below] = y[0] + slope_lo * (p_log_nodes[below] - x[0])
        row[above] = y[-1] + slope_hi * (p_log_nodes[above] - x[-1])
        out[i] = row
    return out


def _isotonic_rows(values: np.ndarray, weights: np.ndarray | None) -> np.ndarray:
    """Nondecreasing fit along the last axis of every row."""
    return np.stack([isotonic_regression(row, weights=weights, increasing=True).x
                     for row in values])


def project_monotone(table: PosteriorTable, u_weights: np.ndarray | None = None,
                     max_alternations: int = MAX_ALTERNATIONS) -> PosteriorTable:
    """
    Project onto tables nondecreasing in u and in p: a u-direction pass
    (weighted by the ex-ante signal marginal) then a p-direction pass
    (uniform weights), repeated until both directions are clean.
    """
    values = np.array(table.log_odds, dtype=float)
    for _ in range(max_alternations):
        if count_monotone_violations(values, MONOTONE_TOL) == 0:
            break
        values = _isotonic_rows(values.T, u_weights).T
        values = _isotonic_rows(values, None)
    else:
        remaining = count_monotone_violations(values, MONOTONE_TOL)
        if remaining:
            log.debug("projection stopped after %d alternations with %d violations",
                      max_alternations, remaining)
    return replace(table, log_odds=values)
