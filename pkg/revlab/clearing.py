"""
revlab/clearing.py — No-learning market clearing.

Clearing solves Σ_k x_k(μ_k, p) = z̄ for p.  Aggregate excess demand is
strictly decreasing in p, so every solve is a bracketed search on logit p.
Scalar solves go through scipy's brentq; lattice solves use a vectorised
bisection-safeguarded Illinois iteration so that G³ cells clear at once.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from revlab.errors import InvalidConfigError, InvalidInputError, NoEquilibriumError
from revlab.grid import SignalGrid, logistic, logit
from revlab.preferences import AgentGroup, Preference, demand_logodds
from shared.config import settings
from shared.logger import get_logger

log = get_logger("revlab.clearing")

LOGIT_BRACKET = 40.0


# ── Market and price types ───────────────────────────────────────────────────

@dataclass(frozen=True)
class MarketConfig:
    """K agent groups trading the binary asset in deterministic supply z̄."""

    groups: tuple[AgentGroup, ...]
    supply: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "groups", tuple(self.groups))
        if len(self.groups) < 1:
            raise InvalidConfigError("market needs at least one group")
        if self.supply < 0:
            raise InvalidConfigError("supply must be nonnegative", supply=self.supply)

    @classmethod
    def homogeneous(cls, pref: Preference, tau: float, K: int = 3,
                    wealth: float = 1.0, supply: float = 0.0) -> "MarketConfig":
        group = AgentGroup(pref=pref, tau=tau, wealth=wealth)
        return cls(groups=(group,) * K, supply=supply)

    @property
    def K(self) -> int:
        return len(self.groups)

    @property
    def taus(self) -> np.ndarray:
        return np.array([g.tau for g in self.groups])

    @property
    def wealths(self) -> np.ndarray:
        return np.array([g.wealth for g in self.groups])

    @property
    def is_homogeneous(self) -> bool:
        return all(g == self.groups[0] for g in self.groups)

    @property
    def all_cara(self) -> bool:
        return all(g.pref.is_cara for g in self.groups)


@dataclass(frozen=True)
class PriceTensor:
    """Equilibrium price on the G^K signal lattice, stored as log-odds."""

    log_odds: np.ndarray

    @classmethod
    def from_prices(cls, prices) -> "PriceTensor":
        return cls(log_odds=np.asarray(logit(np.asarray(prices, dtype=float))))

    @property
    def prices(self) -> np.ndarray:
        return logistic(self.log_odds)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.log_odds.shape


@dataclass(frozen=True)
class ClearingResult:
    price: float
    demands: np.ndarray
    residual: float
    iterations: int
    log_odds: float = field(default=0.0)


# ── Excess demand ────────────────────────────────────────────────────────────

def excess_demand_logodds(cfg: MarketConfig, lmu: np.ndarray, lp,
                          masses: np.ndarray | None = None) -> np.ndarray:
    """
    Σ_k m_k·x_k(lmu_k, lp) − z̄ with lmu shaped (K, ...) or (K, J, ...) when
    each group is split into J sub-populations of mass masses[j].
    """
    lmu = np.asarray(lmu, dtype=float)
    total = np.zeros(np.broadcast_shapes(lmu.shape[1:] if masses is None else lmu.shape[2:],
                                         np.shape(lp)))
    for k, group in enumerate(cfg.groups):
        if masses is None:
            total = total + demand_logodds(group, lmu[k], lp)
        else:
            for j, m in enumerate(masses):
                if m:
                    total = total + m * demand_logodds(group, lmu[k, j], lp)
    return total - cfg.supply


def solve_bracketed(func: Callable[[np.ndarray], np.ndarray], lo: np.ndarray, hi: np.ndarray,
                    tol: float, max_iter: int = 200) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Vectorised root search for a decreasing function on per-entry brackets.

    Illinois (modified regula falsi) steps, with a bisection step whenever the
    previous step failed to halve the bracket.  Returns (root, iterations,
    failed) where failed marks entries whose bracket had no sign change.
    """
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    flo = func(lo)
    fhi = func(hi)
    failed = ~((flo >= 0) & (fhi <= 0))
    root = np.where(flo == 0, lo, np.where(fhi == 0, hi, 0.5 * (lo + hi)))
    active = ~failed & (flo != 0) & (fhi != 0)
    iters = np.zeros(lo.shape, dtype=int)
    last_side = np.zeros(lo.shape, dtype=int)
    bisect = np.zeros(lo.shape, dtype=bool)

    for _ in range(max_iter):
        if not active.any():
            break
        width = hi - lo
        mid = 0.5 * (lo + hi)
        denom = fhi - flo
        flat = denom == 0
        with np.errstate(over="ignore", invalid="ignore"):
            t = (lo * fhi - hi * flo) / np.where(flat, 1.0, denom)
        # equal end values give no secant; bisect those entries
        t = np.where(bisect | flat | ~np.isfinite(t) | (t <= lo) | (t >= hi), mid, t)
        ft = func(t)
        iters = iters + active

        root = np.where(active, t, root)
        converged = (np.abs(ft) <= tol) | (width <= 4e-16 * (1.0 + np.abs(t)))

        move_hi = active & (ft < 0)
        move_lo = active & (ft >= 0)
        # Illinois: halve the stale endpoint's value when the same side repeats
        flo = np.where(move_hi & (last_side == 1), 0.5 * flo, flo)
        fhi = np.where(move_lo & (last_side == -1), 0.5 * fhi, fhi)
        hi = np.where(move_hi, t, hi)
        fhi = np.where(move_hi, ft, fhi)
        lo = np.where(move_lo, t, lo)
        flo = np.where(move_lo, ft, flo)
        last_side = np.where(move_hi, 1, np.where(move_lo, -1, last_side))
        bisect = (hi - lo) > 0.5 * width

        active = active & ~converged
    return root, iters, failed


def clear_logodds(cfg: MarketConfig, lmu: np.ndarray, tol: float | None = None,
                  guess: np.ndarray | None = None,
                  masses: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Clear many markets at once.  lmu has shape (K, n) (or (K, J, n) with
    sub-population masses).  Returns (log-odds price, iterations, failed).
    """
    tol = settings.clear_tol if tol is None else tol
    lmu = np.asarray(lmu, dtype=float)

    def excess(t: np.ndarray) -> np.ndarray:
        return excess_demand_logodds(cfg, lmu, t, masses)

    flat = lmu.reshape(-1, lmu.shape[-1])
    lo = np.minimum(-LOGIT_BRACKET, flat.min(axis=0) - 1.0)
    hi = np.maximum(LOGIT_BRACKET, flat.max(axis=0) + 1.0)
    if cfg.supply > 0:
        lo = lo - LOGIT_BRACKET

    if guess is not None:
        g_lo, g_hi = guess - 1.0, guess + 1.0
        ok = (excess(g_lo) >= 0) & (excess(g_hi) <= 0)
        lo = np.where(ok, g_lo, lo)
        hi = np.where(ok, g_hi, hi)

    return solve_bracketed(excess, lo, hi, tol)


# ── Public API ───────────────────────────────────────────────────────────────

def _check_posteriors(cfg: MarketConfig, mu: Sequence[float]) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (cfg.K,):
        raise InvalidInputError("one posterior per group required", K=cfg.K, got=mu.shape)
    if np.any((mu <= 0) | (mu >= 1)):
        raise InvalidInputError("posteriors must lie strictly inside (0, 1)", mu=mu.tolist())
    return mu


def _clear_scalar(cfg: MarketConfig, lmu: np.ndarray, tol: float, method: str,
                  bracket: tuple[float, float] | None,
                  masses: np.ndarray | None = None) -> ClearingResult:
    def excess(t: float) -> float:
        return float(excess_demand_logodds(cfg, lmu, t, masses))

    if bracket is None:
        lo = min(-LOGIT_BRACKET, float(np.min(lmu)) - 1.0)
        hi = max(LOGIT_BRACKET, float(np.max(lmu)) + 1.0)
        if cfg.supply > 0:
            lo -= LOGIT_BRACKET
    else:
        lo, hi = bracket
    f_lo, f_hi = excess(lo), excess(hi)
    if f_lo < 0 or f_hi > 0:
        raise NoEquilibriumError("excess demand does not change sign on the bracket",
                                 lo=lo, hi=hi, excess_lo=f_lo, excess_hi=f_hi,
                                 supply=cfg.supply)

    solver = {"brentq": optimize.brentq, "toms748": optimize.toms748}[method]
    t, info = solver(excess, lo, hi, xtol=tol, full_output=True)
    if masses is None:
        x = np.array([demand_logodds(g, lmu[k], t) for k, g in enumerate(cfg.groups)])
    else:
        x = np.array([sum(m * demand_logodds(g, lmu[k, j], t) for j, m in enumerate(masses))
                      for k, g in enumerate(cfg.groups)])
    return ClearingResult(
        price=float(logistic(t)),
        demands=x,
        residual=abs(float(x.sum()) - cfg.supply),
        iterations=int(info.iterations),
        log_odds=float(t),
    )


def clear_market(cfg: MarketConfig, mu: Sequence[float], tol: float | None = None,
                 method: str = "brentq",
                 bracket: tuple[float, float] | None = None) -> ClearingResult:
    """
    Unique clearing price for posteriors μ.  Raises NoEquilibriumError when
    the excess demand keeps one sign on the logit bracket (large z̄).
    """
    mu = _check_posteriors(cfg, mu)
    res = _clear_scalar(cfg, np.asarray(logit(mu)), tol or settings.clear_tol, method, bracket)
    if tol is not None and res.residual > tol:
        log.debug("clearing residual %.3e above tol %.1e", res.residual, tol)
    return res


def cara_closed_form(alpha: Sequence[float], tau: Sequence[float], u: Sequence[float]) -> float:
    """logit p = Σ w_k τ_k u_k with w_k ∝ 1/α_k."""
    alpha, tau, u = (np.asarray(a, dtype=float) for a in (alpha, tau, u))
    if not alpha.shape == tau.shape == u.shape:
        raise InvalidInputError("α, τ and u lengths differ")
    w = (1.0 / alpha) / np.sum(1.0 / alpha)
    return float(logistic(np.dot(w, tau * u)))


def cara_supply_shift(alpha: Sequence[float], supply: float) -> float:
    """Shift of logit p caused by supply z̄ under CARA: −z̄ / Σ 1/α_k."""
    alpha = np.asarray(alpha, dtype=float)
    return float(-supply / np.sum(1.0 / alpha))


def log_closed_form(wealth: Sequence[float], tau: Sequence[float], u: Sequence[float]) -> float:
    """p = Σ w_k Λ(τ_k u_k) with w_k ∝ W_k."""
    wealth, tau, u = (np.asarray(a, dtype=float) for a in (wealth, tau, u))
    if not wealth.shape == tau.shape == u.shape:
        raise InvalidInputError("W, τ and u lengths differ")
    return float(np.dot(wealth / wealth.sum(), logistic(tau * u)))


def jensen_gap(tau: float, u: Sequence[float]) -> tuple[float, float]:
    """
    Gap between the log-utility price (probability average of posteriors) and
    Λ(T⋆/K), together with its cubic leading term.  The exact gap is written
    with tanh so that small-τ differences do not cancel.
    """
    u = np.asarray(u, dtype=float)
    K = u.size
    exact = 0.5 * (np.mean(np.tanh(0.5 * tau * u)) - np.tanh(0.5 * tau * u.sum() / K))
    U1, U3 = u.sum(), np.sum(u**3)
    leading = -(tau**3) / (48.0 * K) * (U3 - U1**3 / K**2)
    return float(exact), float(leading)


def jensen_next_order(tau: float, u: Sequence[float]) -> float:
    """Fifth-order term of the expansion: τ⁵/(480K)·(U₅ − U₁⁵/K⁴)."""
    u = np.asarray(u, dtype=float)
    K = u.size
    U1, U5 = u.sum(), np.sum(u**5)
    return float(tau**5 / (480.0 * K) * (U5 - U1**5 / K**4))


def informed_share_clearing(cfg: MarketConfig, lam: float, mu_informed: Sequence[float],
                            tol: float | None = None,
                            mu_uninformed: float = 0.5) -> ClearingResult:
    """Clear with mass λ of each group informed and 1−λ at the prior."""
    if not 0.0 <= lam <= 1.0:
        raise InvalidConfigError("informed share must lie in [0, 1]", lam=lam)
    mu = _check_posteriors(cfg, mu_informed)
    lmu = np.stack([logit(mu), np.full(cfg.K, logit(mu_uninformed))], axis=1)
    masses = np.array([lam, 1.0 - lam])
    return _clear_scalar(cfg, lmu, tol or settings.clear_tol, "brentq", None, masses)


# ── Lattice tensors ──────────────────────────────────────────────────────────

def private_logodds(cfg: MarketConfig, grid: SignalGrid) -> np.ndarray:
    """(K, G^K) array of private log-odds τ_k·u_k on the flattened lattice."""
    K, G = cfg.K, grid.size
    cells = np.stack(np.meshgrid(*([grid.nodes] * K), indexing="ij"), axis=0).reshape(K, -1)
    return cfg.taus[:, None] * cells


def _fill_tensor(cfg: MarketConfig, lmu: np.ndarray, shape: tuple[int, ...], tol: float,
                 masses: np.ndarray | None = None) -> PriceTensor:
    lp, iters, failed = clear_logodds(cfg, lmu, tol, masses=masses)
    if failed.any():
        raise NoEquilibriumError("clearing failed on lattice cells",
                                 cells=int(failed.sum()), supply=cfg.supply)
    log.debug("tensor cleared: %d cells, max %d iterations", lp.size, int(iters.max()))
    return PriceTensor(log_odds=lp.reshape(shape))


def no_learning_price_tensor(cfg: MarketConfig, grid: SignalGrid,
                             tol: float | None = None) -> PriceTensor:
    """Clearing price at private posteriors Λ(τ_k u) on every lattice cell."""
    tol = settings.clear_tol if tol is None else tol
    return _fill_tensor(cfg, private_logodds(cfg, grid), (grid.size,) * cfg.K, tol)


def informed_share_price_tensor(cfg: MarketConfig, grid: SignalGrid, lam: float,
                                tol: float | None = None) -> PriceTensor:
    """λ-mixed no-learning price on every lattice cell."""
    if not 0.0 <= lam <= 1.0:
        raise InvalidConfigError("informed share must lie in [0, 1]", lam=lam)
    tol = settings.clear_tol if tol is None else tol
    informed = private_logodds(cfg, grid)
    lmu = np.stack([informed, np.zeros_like(informed)], axis=1)
    return _fill_tensor(cfg, lmu, (grid.size,) * cfg.K, tol, masses=np.array([lam, 1.0 - lam]))


def lattice_demands(cfg: MarketConfig, lmu: np.ndarray, lp: np.ndarray) -> np.ndarray:
    """Demands (K, ...) of every group at log-odds beliefs lmu and price lp."""
    return np.stack([demand_logodds(g, lmu[k], lp) for k, g in enumerate(cfg.groups)])


def permutation_spread(tensor: np.ndarray) -> float:
    """Largest deviation of a K-way tensor from any of its axis permutations."""
    K = tensor.ndim
    return max(float(np.max(np.abs(tensor - np.transpose(tensor, perm))))
               for perm in itertools.permutations(range(K)))
