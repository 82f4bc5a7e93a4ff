"""
revlab/ree/contour.py — Level-set tracing of price slices and Bayes along them.

An agent holding signal u_k sees the slice S[a, b] = P(u_k, u_a, u_b) of the
price tensor.  Observing price p reveals that the peer signals lie on the level
set {S = p}.  The level set is located by two sweeps: rows a′ solving for the
b coordinate, then columns b′ solving for a, each by linear interpolation
between the bracketing nodes.  Sweep lines without a sign change may still
cross within one spacing beyond the edge; those crossings are extrapolated.

Everything is done on log-odds slices and log densities, so saturated prices
and vanishing densities never underflow.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import logsumexp

from revlab.errors import InvalidInputError
from revlab.grid import SignalGrid, log_density, logistic, logit

LOG_HALF = np.log(0.5)


class _Crossings(NamedTuple):
    hit: np.ndarray          # (..., S, G-1) sign change inside interval
    coord: np.ndarray        # (..., S, G-1) interpolated off-axis coordinate
    frac: np.ndarray         # (..., S, G-1) position inside the interval
    last_hit: np.ndarray     # (..., S) level exactly at the final node
    left: np.ndarray         # (..., S) extrapolated below the first node
    left_coord: np.ndarray
    right: np.ndarray        # (..., S) extrapolated above the last node
    right_coord: np.ndarray

    def count(self) -> np.ndarray:
        return (self.hit.sum(axis=(-2, -1)) + self.last_hit.sum(-1)
                + self.left.sum(-1) + self.right.sum(-1))


def _line_crossings(D: np.ndarray, nodes: np.ndarray, spacing: float) -> _Crossings:
    """Crossings of D = slice − level along the last axis of every sweep line."""
    d0 = D[..., :-1]
    d1 = D[..., 1:]
    hit = (d0 == 0) | (d0 * d1 < 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(d0 == 0, 0.0, d0 / (d0 - d1))
    frac = np.where(hit, frac, 0.0)
    coord = nodes[:-1] + frac * spacing
    last_hit = D[..., -1] == 0

    none_inside = (hit.sum(-1) + last_hit) == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        slope_l = D[..., 1] - D[..., 0]
        t_l = np.where(slope_l != 0, -D[..., 0] / slope_l, np.inf)
        slope_r = D[..., -1] - D[..., -2]
        t_r = np.where(slope_r != 0, -D[..., -1] / slope_r, -np.inf)
    left = none_inside & (t_l >= -1.0) & (t_l < 0.0)
    right = none_inside & (t_r > 0.0) & (t_r <= 1.0)
    return _Crossings(
        hit=hit, coord=coord, frac=frac, last_hit=last_hit,
        left=left, left_coord=nodes[0] + np.where(left, t_l, 0.0) * spacing,
        right=right, right_coord=nodes[-1] + np.where(right, t_r, 0.0) * spacing,
    )


def _log_evidence(cr: _Crossings, log_f_sweep: np.ndarray, tau_off: float,
                  v: int, last_node: float) -> np.ndarray:
    """log Σ over crossings of f_v(sweep node)·f_v(off-axis coordinate)."""
    neg = -np.inf
    inner = np.where(cr.hit, log_f_sweep[:, None] + log_density(tau_off, cr.coord, v), neg)
    last = np.where(cr.last_hit, log_f_sweep + log_density(tau_off, last_node, v), neg)
    left = np.where(cr.left, log_f_sweep + log_density(tau_off, cr.left_coord, v), neg)
    right = np.where(cr.right, log_f_sweep + log_density(tau_off, cr.right_coord, v), neg)
    stacked = np.concatenate([inner, last[..., None], left[..., None], right[..., None]], axis=-1)
    with np.errstate(divide="ignore"):
        return logsumexp(stacked, axis=(-2, -1))


# ── Single contour ───────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ContourTrace:
    """
    Crossings of one slice at one level.  axis 0 crossings come from row
    sweeps (sweep coordinate u_a, off-axis u_b); axis 1 from column sweeps
    (sweep coordinate u_b, off-axis u_a).
    """

    level: float
    own_index: int
    axis: np.ndarray
    sweep: np.ndarray
    off_axis: np.ndarray
    weight: np.ndarray

    @property
    def empty(self) -> bool:
        return self.axis.size == 0

    @property
    def n_crossings(self) -> int:
        return int(self.axis.size)

    def points(self, axis: int | None = None) -> np.ndarray:
        """Crossings as (u_a, u_b) pairs, optionally from one sweep only."""
        keep = np.ones(self.axis.size, dtype=bool) if axis is None else self.axis == axis
        a = np.where(self.axis == 0, self.sweep, self.off_axis)[keep]
        b = np.where(self.axis == 0, self.off_axis, self.sweep)[keep]
        return np.column_stack([a, b])


def _collect(cr: _Crossings, nodes: np.ndarray, axis: int) -> tuple[np.ndarray, ...]:
    h = nodes[1] - nodes[0]
    rows, cols = np.nonzero(cr.hit)
    last = np.nonzero(cr.last_hit)[0]
    left = np.nonzero(cr.left)[0]
    right = np.nonzero(cr.right)[0]
    sweep = np.concatenate([nodes[rows], nodes[last], nodes[left], nodes[right]])
    off = np.concatenate([cr.coord[rows, cols], np.full(last.size, nodes[-1]),
                          cr.left_coord[left], cr.right_coord[right]])
    weight = np.concatenate([cr.frac[rows, cols], np.zeros(last.size),
                             (cr.left_coord[left] - nodes[0]) / h,
                             (cr.right_coord[right] - nodes[-1]) / h])
    return np.full(sweep.size, axis), sweep, off, weight


def trace_contour(slice_: np.ndarray, level: float, grid: SignalGrid, own_index: int = 0,
                  log_odds: bool = False) -> ContourTrace:
    """
    Two-pass trace of {slice = level}.  slice_ holds prices (or log-odds with
    log_odds=True); the level is given on the same scale.  A level outside the
    slice range and its extrapolation band yields an empty trace.
    """
    S = np.asarray(slice_, dtype=float)
    if S.shape != (grid.size, grid.size):
        raise InvalidInputError("slice must be G×G", shape=S.shape, G=grid.size)
    if not log_odds:
        S = np.asarray(logit(S))
        level = logit(level)
    nodes, h = grid.nodes, grid.spacing
    D = S - level
    parts = [_collect(_line_crossings(D, nodes, h), nodes, 0),
             _collect(_line_crossings(D.T, nodes, h), nodes, 1)]
    axis, sweep, off, weight = (np.concatenate(x) for x in zip(*parts))
    return ContourTrace(level=float(logistic(level)), own_index=own_index,
                        axis=axis.astype(int), sweep=sweep, off_axis=off, weight=weight)


def contour_posterior(trace: ContourTrace, own_u: float, tau: Sequence[float]) -> float:
    """
    Bayes along the traced level set:
    A_v = ½[Σ_rows f_v(u_a)f_v(u_b^c) + Σ_cols f_v(u_a^c)f_v(u_b)],
    μ = f1(u)A1 / (f0(u)A0 + f1(u)A1).  tau = (τ_own, τ_a, τ_b).
    """
    if trace.empty:
        raise InvalidInputError("cannot update on an empty contour", level=trace.level)
    tau_own, tau_a, tau_b = (float(t) for t in tau)
    pts = trace.points()
    log_a = []
    for v in (0, 1):
        terms = log_density(tau_a, pts[:, 0], v) + log_density(tau_b, pts[:, 1], v)
        per_axis = [logsumexp(terms[trace.axis == ax]) if np.any(trace.axis == ax) else -np.inf
                    for ax in (0, 1)]
        log_a.append(np.logaddexp(*per_axis) + LOG_HALF)
    return float(logistic(tau_own * own_u + log_a[1] - log_a[0]))


# ── Batched Bayes over (own node, level) ─────────────────────────────────────

@dataclass(frozen=True)
class SliceEvidence:
    """log A_v for every (own node, level) pair plus the activity mask."""

    log_a0: np.ndarray
    log_a1: np.ndarray
    active: np.ndarray

    def log_odds(self, tau_own: float, u_nodes: np.ndarray) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            out = tau_own * u_nodes[:, None] + self.log_a1 - self.log_a0
        return np.where(self.active, out, np.nan)


def slice_evidence(slices: np.ndarray, levels: np.ndarray, grid: SignalGrid,
                   tau_a: float, tau_b: float) -> SliceEvidence:
    """
    Contour evidence for all own-signal slices at once.

    slices: (G_own, G, G) log-odds price slices; levels: (G_p,) log-odds.
    A node is active when either sweep finds at least two crossings.
    """
    nodes, h = grid.nodes, grid.spacing
    D = slices[:, None, :, :] - levels[None, :, None, None]
    rows = _line_crossings(D, nodes, h)
    cols = _line_crossings(np.swapaxes(D, -1, -2), nodes, h)
    log_a = []
    for v in (0, 1):
        e_rows = _log_evidence(rows, log_density(tau_a, nodes, v), tau_b, v, nodes[-1])
        e_cols = _log_evidence(cols, log_density(tau_b, nodes, v), tau_a, v, nodes[-1])
        log_a.append(np.logaddexp(e_rows, e_cols) + LOG_HALF)
    active = np.maximum(rows.count(), cols.count()) >= 2
    return SliceEvidence(log_a0=log_a[0], log_a1=log_a[1], active=active)


def own_slices(log_odds: np.ndarray, k: int) -> np.ndarray:
    """Agent k's slices: own axis first, remaining axes in increasing order."""
    return np.moveaxis(log_odds, k, 0)


def peer_indices(k: int, K: int = 3) -> tuple[int, int]:
    a, b = (j for j in range(K) if j != k)
    return a, b
