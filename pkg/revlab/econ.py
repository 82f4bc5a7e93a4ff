"""
revlab/econ.py — Certainty equivalents, value of information, costly acquisition.

The value of a signal is measured by replication: an agent who holds the
signal trades x(μ⁺, p); without it the trade would be x(μ⁻, p).  Both trades
are evaluated under the informed belief μ⁺, so the per-cell gain is never
negative.  Ex-ante values weight the gains by the lattice cell probabilities.

Without learning from prices μ⁻ is the prior ½; at an REE it is the
posterior of an observer who sees only the price.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Sequence

import numpy as np
import pandas as pd
from scipy import optimize
from scipy.special import expit, log_expit, logsumexp

from revlab.clearing import (
    MarketConfig,
    informed_share_price_tensor,
    no_learning_price_tensor,
    private_logodds,
)
from revlab.errors import InvalidConfigError, InvalidInputError
from revlab.grid import SignalGrid, joint_weights, lattice_statistic, log_density, logit
from revlab.preferences import AgentGroup, Preference, demand_logodds
from revlab.ree.solver import (
    REESolution,
    SolverConfig,
    fully_revealing_price,
    price_posterior,
    solve_ree,
)
from shared.logger import get_logger

log = get_logger("revlab.econ")

LAMBDA_LADDER = np.round(np.linspace(0.0, 1.0, 11), 10)
MONOTONE_SLACK = 1e-12
PRICE_SOURCES = ("no-learning", "fully-revealing")


# ── Certainty equivalents ────────────────────────────────────────────────────

def _terminal_wealth(group: AgentGroup, lp: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return group.wealth + expit(-lp) * x, group.wealth - expit(lp) * x


def trade_certainty_equivalent(group: AgentGroup, lmu, lp, x) -> np.ndarray:
    """
    CE of holding x units at price p under belief μ (all log-odds inputs,
    vectorised).  CRRA and log utility use the generalised mean of terminal
    wealth; CARA the exponential one.
    """
    lmu, lp, x = (np.asarray(a, dtype=float) for a in (lmu, lp, x))
    up, down = _terminal_wealth(group, lp, x)
    log_mu, log_not = log_expit(lmu), log_expit(-lmu)
    risk = group.pref.risk
    if group.pref.is_cara:
        return -logsumexp([log_mu - risk * up, log_not - risk * down], axis=0) / risk
    if np.any(up <= 0) or np.any(down <= 0):
        raise InvalidInputError("trade leaves nonpositive terminal wealth")
    if group.pref.is_log:
        return np.exp(expit(lmu) * np.log(up) + expit(-lmu) * np.log(down))
    k = 1.0 - risk
    return np.exp(logsumexp([log_mu + k * np.log(up), log_not + k * np.log(down)], axis=0) / k)


def certainty_equivalent(pref: Preference, wealth: float, mu: float, p: float) -> float:
    """CE of optimal trading at belief μ and price p; equals W exactly when μ = p."""
    if not (0 < mu < 1 and 0 < p < 1):
        raise InvalidInputError("μ and p must lie strictly inside (0, 1)", mu=mu, p=p)
    group = AgentGroup(pref=pref, tau=1.0, wealth=wealth)
    lmu, lp = logit(mu), logit(p)
    x = demand_logodds(group, lmu, lp)
    return float(trade_certainty_equivalent(group, lmu, lp, x))


def information_gain(group: AgentGroup, lmu_plus, lmu_minus, lp) -> np.ndarray:
    """CE(μ⁺; x(μ⁺)) − CE(μ⁺; x(μ⁻)) cell by cell."""
    x_plus = demand_logodds(group, lmu_plus, lp)
    x_minus = demand_logodds(group, lmu_minus, lp)
    return (trade_certainty_equivalent(group, lmu_plus, lp, x_plus)
            - trade_certainty_equivalent(group, lmu_plus, lp, x_minus))


# ── Value of information ─────────────────────────────────────────────────────

@dataclass(frozen=True)
class CertaintyEquivalentReport:
    ce_informed: float
    ce_uninformed: float
    v_info: float
    per_cell: np.ndarray = field(repr=False)
    source: str = ""

    def to_frame(self, grid: SignalGrid) -> pd.DataFrame:
        """Per-cell gains keyed by the lattice signals."""
        K = self.per_cell.ndim
        idx = np.indices(self.per_cell.shape).reshape(K, -1)
        frame = pd.DataFrame({f"u{k + 1}": grid.nodes[idx[k]] for k in range(K)})
        frame["gain"] = self.per_cell.ravel()
        return frame

    def as_row(self) -> dict[str, Any]:
        return {"source": self.source, "ce_informed": self.ce_informed,
                "ce_uninformed": self.ce_uninformed, "v_info": self.v_info}


def with_precision(cfg: MarketConfig, tau: float) -> MarketConfig:
    """Same groups, every signal precision set to τ."""
    return MarketConfig(groups=tuple(replace(g, tau=float(tau)) for g in cfg.groups),
                        supply=cfg.supply)


def _beliefs(cfg: MarketConfig, grid: SignalGrid, source, group: int,
             informed_share: float) -> tuple[np.ndarray, np.ndarray, np.ndarray, str]:
    """(log-odds μ⁺, log-odds μ⁻, log-odds price) on the lattice for one group."""
    shape = (grid.size,) * cfg.K
    if isinstance(source, REESolution):
        beliefs = source.beliefs()
        lP = source.price.log_odds
        uninformed = price_posterior(source.price, cfg, grid, source.table.p_log_nodes)
        return beliefs.log_odds[group], uninformed.at(lP), lP, "ree"
    if source == "fully-revealing":
        # the price reveals T⋆, so the own signal adds nothing
        lP = fully_revealing_price(cfg, grid).log_odds
        full = lattice_statistic(grid, cfg.taus)
        return full, full, lP, source
    if source == "no-learning":
        if informed_share < 1.0:
            price = informed_share_price_tensor(cfg, grid, informed_share)
        else:
            price = no_learning_price_tensor(cfg, grid)
        lP = price.log_odds
        own = private_logodds(cfg, grid)[group].reshape(shape)
        # the uninformed hold the prior, as in the informed-share clearing
        return own, np.zeros_like(lP), lP, source
    raise InvalidConfigError("unknown price source", source=source,
                             allowed=PRICE_SOURCES + ("REESolution",))


def _extra_signal_gain(group: AgentGroup, lmu: np.ndarray, lp: np.ndarray,
                       grid: SignalGrid, tau_extra: float) -> np.ndarray:
    """
    Expected gain from one more independent signal of precision τ_extra on
    top of belief μ, integrated over the signal nodes with state-conditional
    weights (the discretised likelihood, normalised per state).
    """
    log_w = [log_density(tau_extra, grid.nodes, v) for v in (0, 1)]
    log_w = [lw - logsumexp(lw) for lw in log_w]
    shift = (log_w[1] - log_w[0]).reshape((-1,) + (1,) * lmu.ndim)
    lw0 = log_w[0].reshape(shift.shape)
    lw1 = log_w[1].reshape(shift.shape)
    posterior = lmu[None] + shift
    prob = np.exp(np.logaddexp(log_expit(lmu)[None] + lw1, log_expit(-lmu)[None] + lw0))
    gains = information_gain(group, posterior, np.broadcast_to(lmu, posterior.shape),
                             np.broadcast_to(lp, posterior.shape))
    return np.sum(prob * gains, axis=0)


def value_of_information(cfg: MarketConfig, grid: SignalGrid,
                         source: str | REESolution = "no-learning",
                         tau_extra: float | None = None, group: int = 0,
                         informed_share: float = 1.0) -> CertaintyEquivalentReport:
    """
    Ex-ante CE value to `group` of its signal at the given price source.
    With tau_extra the valued signal is instead an additional independent
    signal of that precision, on top of everything the group already knows.
    """
    if not 0 <= group < cfg.K:
        raise InvalidInputError("group index out of range", group=group, K=cfg.K)
    if tau_extra is not None and not tau_extra > 0:
        raise InvalidConfigError("extra signal precision must be positive", tau_extra=tau_extra)
    agent = cfg.groups[group]
    lmu_plus, lmu_minus, lP, label = _beliefs(cfg, grid, source, group, informed_share)
    w = joint_weights(grid, cfg.taus)

    if tau_extra is None:
        x_plus = demand_logodds(agent, lmu_plus, lP)
        x_minus = demand_logodds(agent, lmu_minus, lP)
        ce_plus = trade_certainty_equivalent(agent, lmu_plus, lP, x_plus)
        ce_minus = trade_certainty_equivalent(agent, lmu_plus, lP, x_minus)
        gain = ce_plus - ce_minus
    else:
        gain = _extra_signal_gain(agent, lmu_plus, lP, grid, tau_extra)
        x_base = demand_logodds(agent, lmu_plus, lP)
        ce_minus = trade_certainty_equivalent(agent, lmu_plus, lP, x_base)
        ce_plus = ce_minus + gain
        label = f"{label}+extra"

    report = CertaintyEquivalentReport(
        ce_informed=float(np.sum(w * ce_plus)),
        ce_uninformed=float(np.sum(w * ce_minus)),
        v_info=float(np.sum(w * gain)),
        per_cell=gain,
        source=label,
    )
    if report.v_info < -MONOTONE_SLACK:
        log.warning("negative information value %.3e (%s)", report.v_info, label)
    return report


def default_pricing(cfg: MarketConfig) -> str:
    return "fully-revealing" if cfg.all_cara else "no-learning"


def value_by_informed_share(cfg: MarketConfig, grid: SignalGrid, lam: float,
                            tau: float | None = None, pricing: str | None = None,
                            solver: SolverConfig | None = None) -> float:
    """
    Value of the signal to a marginal acquirer when a share λ of every group
    is informed.  pricing: "no-learning" (λ-mixed clearing), "fully-revealing"
    or "ree" (λ-mixed contour fixed point; expensive).
    """
    if not 0.0 <= lam <= 1.0:
        raise InvalidConfigError("informed share must lie in [0, 1]", lam=lam)
    if tau is not None:
        cfg = with_precision(cfg, tau)
    pricing = pricing or default_pricing(cfg)
    if pricing == "fully-revealing":
        return value_of_information(cfg, grid, "fully-revealing").v_info
    if pricing == "no-learning" or (pricing == "ree" and lam == 0.0):
        return value_of_information(cfg, grid, "no-learning", informed_share=lam).v_info
    if pricing == "ree":
        sol = solve_ree(cfg, grid, solver, informed_share=lam)
        return value_of_information(cfg, grid, sol).v_info
    raise InvalidConfigError("unknown pricing", pricing=pricing,
                             allowed=PRICE_SOURCES + ("ree",))


# ── Costly acquisition ───────────────────────────────────────────────────────

class AcquisitionBoundary(str, Enum):
    INTERIOR = "interior"
    CORNER_0 = "corner-0"
    CORNER_1 = "corner-1"
    FLAGGED = "flagged"


@dataclass(frozen=True)
class AcquisitionEquilibrium:
    cost: float
    lam: float
    v_at_lam: float
    boundary: AcquisitionBoundary
    ladder: list[tuple[float, float]] = field(default_factory=list)
    monotone: bool = True

    def as_row(self) -> dict[str, Any]:
        return {"cost": self.cost, "lambda": self.lam, "v_at_lambda": self.v_at_lam,
                "boundary": self.boundary.value, "monotone": self.monotone}


def value_ladder(cfg: MarketConfig, grid: SignalGrid, tau: float | None = None,
                 pricing: str | None = None, lams: Sequence[float] = LAMBDA_LADDER,
                 solver: SolverConfig | None = None) -> list[tuple[float, float]]:
    return [(float(lam), value_by_informed_share(cfg, grid, lam, tau, pricing, solver))
            for lam in lams]


def gs_equilibrium(cfg: MarketConfig, grid: SignalGrid, tau: float | None, cost: float,
                   tol: float = 1e-10, pricing: str | None = None,
                   ladder: list[tuple[float, float]] | None = None,
                   solver: SolverConfig | None = None) -> AcquisitionEquilibrium:
    """
    Share of informed agents at which the marginal acquirer is indifferent.
    V is tabulated on the λ ladder first; a ladder that is not weakly
    decreasing is flagged and no root is claimed.  Pass a precomputed
    ladder to sweep many costs cheaply.
    """
    if not cost > 0:
        raise InvalidConfigError("acquisition cost must be positive", cost=cost)
    pricing = pricing or default_pricing(cfg if tau is None else with_precision(cfg, tau))
    ladder = ladder or value_ladder(cfg, grid, tau, pricing, solver=solver)
    lams = np.array([lam for lam, _ in ladder])
    values = np.array([v for _, v in ladder])
    monotone = bool(np.all(np.diff(values) <= MONOTONE_SLACK * max(1.0, np.max(np.abs(values)))))
    if not monotone:
        log.warning("value of information is not monotone in λ; no equilibrium claimed")
        return AcquisitionEquilibrium(cost, float("nan"), float("nan"),
                                      AcquisitionBoundary.FLAGGED, ladder, False)

    v0, v1 = values[0], values[-1]
    if cost >= v0:
        return AcquisitionEquilibrium(cost, 0.0, float(v0), AcquisitionBoundary.CORNER_0, ladder)
    if cost <= v1:
        return AcquisitionEquilibrium(cost, 1.0, float(v1), AcquisitionBoundary.CORNER_1, ladder)

    # first ladder interval where V − c changes sign
    j = int(np.nonzero(values - cost <= 0)[0][0])
    lo, hi = lams[j - 1], lams[j]

    def excess_value(lam: float) -> float:
        return value_by_informed_share(cfg, grid, lam, tau, pricing, solver) - cost

    lam_star = optimize.brentq(excess_value, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps)
    v_star = excess_value(lam_star) + cost
    log.info("acquisition equilibrium: c=%.4g λ*=%.6f V(λ*)=%.6g", cost, lam_star, v_star)
    return AcquisitionEquilibrium(cost, float(lam_star), float(v_star),
                                  AcquisitionBoundary.INTERIOR, ladder)
