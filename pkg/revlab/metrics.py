"""
revlab/metrics.py — Revelation deficit, trade volume and solver diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any, Sequence

import numpy as np

from revlab.clearing import (
    MarketConfig,
    PriceTensor,
    jensen_gap,
    jensen_next_order,
    lattice_demands,
    no_learning_price_tensor,
    private_logodds,
)
from revlab.errors import DegenerateRegressionError, InvalidInputError
from revlab.grid import SignalGrid, joint_weights, lattice_statistic, logit
from shared.config import settings
from shared.logger import get_logger

log = get_logger("revlab.metrics")

MONOTONE_TOL = 1e-14


# ── Types ────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class RegressionReport:
    slope: float
    intercept: float
    r2: float
    deficit: float
    n_cells: int

    def as_row(self) -> dict[str, Any]:
        return {"deficit": self.deficit, "slope": self.slope,
                "intercept": self.intercept, "r2": self.r2, "n_cells": self.n_cells}


class SolverStatus(str, Enum):
    STRICT = "strict"
    FALLBACK = "fallback"
    DIVERGED = "diverged"


@dataclass(frozen=True)
class DiagnosticsReport:
    residual_inf: float
    mono_violations: int
    status: SolverStatus
    active_cells: int = 0

    def as_row(self) -> dict[str, Any]:
        return {"residual": self.residual_inf, "mono_violations": self.mono_violations,
                "status": self.status.value, "active_cells": self.active_cells}


@dataclass(frozen=True)
class LatticeBeliefs:
    """Price tensor plus each group's log-odds belief at every lattice cell."""

    price: PriceTensor
    log_odds: np.ndarray  # (K, *lattice)


# ── Regression ───────────────────────────────────────────────────────────────

def _log_odds_of(P) -> np.ndarray:
    if isinstance(P, PriceTensor):
        return P.log_odds
    P = np.asarray(P, dtype=float)
    if np.any((P <= 0) | (P >= 1)):
        raise InvalidInputError("prices must be strictly interior")
    return np.asarray(logit(P))


def weighted_regression(x: np.ndarray, y: np.ndarray, w: np.ndarray) -> RegressionReport:
    """Weighted least squares of y on x; r² is the squared weighted correlation."""
    x, y, w = (np.ravel(a).astype(float) for a in (x, y, w))
    mx = np.average(x, weights=w)
    my = np.average(y, weights=w)
    varx = np.average((x - mx) ** 2, weights=w)
    vary = np.average((y - my) ** 2, weights=w)
    cov = np.average((x - mx) * (y - my), weights=w)
    scale = max(1.0, abs(mx), abs(my))
    if varx <= (1e-14 * scale) ** 2 or vary <= (1e-14 * scale) ** 2:
        raise DegenerateRegressionError("regression variable has zero variance",
                                        var_x=float(varx), var_y=float(vary))
    slope = cov / varx
    r2 = float(np.clip(cov * cov / (varx * vary), 0.0, 1.0))
    return RegressionReport(slope=float(slope), intercept=float(my - slope * mx),
                            r2=r2, deficit=1.0 - r2, n_cells=int(x.size))


def revelation_deficit(P, grid: SignalGrid, tau: Sequence[float],
                       weights: np.ndarray | None = None) -> RegressionReport:
    """
    Regress logit P on T⋆ over the lattice with ex-ante cell weights; the
    deficit 1 − r² is zero exactly when the price is an affine function of T⋆
    in log-odds.
    """
    y = _log_odds_of(P)
    tau = np.asarray(tau, dtype=float)
    if y.shape != (grid.size,) * tau.size:
        raise InvalidInputError("price tensor does not match the lattice",
                                shape=y.shape, G=grid.size, K=tau.size)
    w = joint_weights(grid, tau) if weights is None else np.asarray(weights)
    return weighted_regression(lattice_statistic(grid, tau), y, w)


# ── Volume ───────────────────────────────────────────────────────────────────

def trade_volume(x: Sequence[float]) -> float:
    """½ Σ |x_k|."""
    return 0.5 * float(np.sum(np.abs(np.asarray(x, dtype=float))))


def no_learning_beliefs(cfg: MarketConfig, grid: SignalGrid) -> LatticeBeliefs:
    price = no_learning_price_tensor(cfg, grid)
    return LatticeBeliefs(price=price,
                          log_odds=private_logodds(cfg, grid).reshape((cfg.K,) + price.shape))


def expected_volume(cfg: MarketConfig, grid: SignalGrid, weights: np.ndarray | None,
                    source: LatticeBeliefs | str = "no-learning") -> float:
    """
    Ex-ante expected volume ½ Σ_k |x_k| over the lattice.  A named source
    "ree" solves the fixed point with the default solver settings first.
    """
    if source == "no-learning":
        source = no_learning_beliefs(cfg, grid)
    elif source == "ree":
        from revlab.ree.solver import solve_ree  # deferred to avoid circular import
        source = solve_ree(cfg, grid).beliefs()
    elif isinstance(source, str):
        raise InvalidInputError("named sources: 'no-learning', 'ree'", source=source)
    w = joint_weights(grid, cfg.taus) if weights is None else weights
    x = lattice_demands(cfg, source.log_odds, source.price.log_odds)
    return float(np.sum(w * 0.5 * np.sum(np.abs(x), axis=0)))


# ── Diagnostics ──────────────────────────────────────────────────────────────

def count_monotone_violations(table: np.ndarray, tol: float = MONOTONE_TOL) -> int:
    """Decreasing adjacent pairs along both axes of (stacks of) (G_u, G_p) tables."""
    table = np.asarray(table, dtype=float)
    along_u = np.diff(table, axis=-2) < -tol
    along_p = np.diff(table, axis=-1) < -tol
    return int(along_u.sum() + along_p.sum())


def diagnostics(posterior_residual: np.ndarray, table: np.ndarray,
                active: np.ndarray | None = None, strict_tol: float | None = None,
                diverged: bool = False) -> DiagnosticsReport:
    """
    Summarise a fixed-point state: sup-norm residual over active nodes,
    monotonicity violations of the belief table, and the resulting status.
    """
    strict_tol = settings.strict_tol if strict_tol is None else strict_tol
    res = np.abs(np.asarray(posterior_residual, dtype=float))
    if active is not None:
        res = res[np.asarray(active, dtype=bool)]
    residual_inf = float(res.max()) if res.size else 0.0
    violations = count_monotone_violations(table)
    if diverged:
        status = SolverStatus.DIVERGED
    elif residual_inf < strict_tol and violations == 0:
        status = SolverStatus.STRICT
    else:
        status = SolverStatus.FALLBACK
    return DiagnosticsReport(residual_inf=residual_inf, mono_violations=violations,
                             status=status, active_cells=int(res.size))


# ── Jensen expansion ─────────────────────────────────────────────────────────

def jensen_series(taus: Sequence[float], u: Sequence[float]) -> list[dict[str, float]]:
    """Exact gap, cubic term and quintic term along a ladder of precisions."""
    rows = []
    for tau in taus:
        exact, leading = jensen_gap(tau, u)
        rows.append({
            "tau": float(tau),
            "exact": exact,
            "leading": leading,
            "next_order": jensen_next_order(tau, u),
            "remainder": exact - leading,
        })
    return rows
