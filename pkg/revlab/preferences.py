"""
revlab/preferences.py — CARA / CRRA demand for the binary asset.

The asset pays 1 in state v=1 and 0 otherwise and costs p.  An agent with
belief μ and wealth W chooses x to maximise
μ·U(W + (1−p)x) + (1−μ)·U(W − p·x).  All kernels work in log-odds
(z = logit μ − logit p) so that near-degenerate posteriors never overflow.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.special import expit

from revlab.errors import InvalidConfigError, InvalidInputError
from revlab.grid import logit


class PreferenceKind(str, Enum):
    CARA = "cara"
    CRRA = "crra"


@dataclass(frozen=True)
class Preference:
    """CARA(α) or CRRA(γ); γ = 1 is log utility."""

    kind: PreferenceKind
    risk: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.risk) and self.risk > 0):
            raise InvalidConfigError("risk aversion must be positive and finite",
                                     kind=self.kind.value, risk=self.risk)

    @classmethod
    def cara(cls, alpha: float) -> "Preference":
        return cls(PreferenceKind.CARA, float(alpha))

    @classmethod
    def crra(cls, gamma: float) -> "Preference":
        return cls(PreferenceKind.CRRA, float(gamma))

    @property
    def is_cara(self) -> bool:
        return self.kind is PreferenceKind.CARA

    @property
    def is_log(self) -> bool:
        return self.kind is PreferenceKind.CRRA and self.risk == 1.0

    def label(self) -> str:
        symbol = "alpha" if self.is_cara else "gamma"
        return f"{self.kind.value}({symbol}={self.risk:g})"


@dataclass(frozen=True)
class AgentGroup:
    """A continuum of identical agents: preference, signal precision, wealth."""

    pref: Preference
    tau: float
    wealth: float = 1.0

    def __post_init__(self) -> None:
        if not self.tau > 0:
            raise InvalidConfigError("signal precision must be positive", tau=self.tau)
        if not self.wealth > 0:
            raise InvalidConfigError("wealth must be positive", wealth=self.wealth)


# ── Log-odds kernels (vectorised) ────────────────────────────────────────────

def cara_demand_logodds(alpha: float, lmu, lp):
    return (np.asarray(lmu, dtype=float) - lp) / alpha


def crra_demand_logodds(gamma: float, wealth: float, lmu, lp):
    """
    x = W(R−1)/((1−p)+Rp), R = exp((logit μ − logit p)/γ), evaluated with
    e = exp(−|s|) so neither R nor 1/R is ever formed.
    """
    lmu = np.asarray(lmu, dtype=float)
    lp = np.asarray(lp, dtype=float)
    p = expit(lp)
    q = expit(-lp)
    if gamma == 1.0:
        mu = expit(lmu)
        return wealth * (mu - p) / (p * q)
    s = (lmu - lp) / gamma
    e = np.exp(-np.abs(s))
    gain = -np.expm1(-np.abs(s))
    denom = np.where(s >= 0, q * e + p, q + e * p)
    return np.sign(s) * wealth * gain / denom


def demand_logodds(group: AgentGroup, lmu, lp):
    """Demand of one group given log-odds belief and log-odds price."""
    if group.pref.is_cara:
        return cara_demand_logodds(group.pref.risk, lmu, lp)
    return crra_demand_logodds(group.pref.risk, group.wealth, lmu, lp)


def _scalar(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


# ── Public API ───────────────────────────────────────────────────────────────

def demand_cara(alpha: float, mu, p):
    """x = (logit μ − logit p)/α."""
    return _scalar(cara_demand_logodds(alpha, logit(mu), logit(p)))


def demand_crra(gamma: float, wealth: float, mu, p):
    if not gamma > 0 or not wealth > 0:
        raise InvalidConfigError("γ and W must be positive", gamma=gamma, wealth=wealth)
    return _scalar(crra_demand_logodds(gamma, wealth, logit(mu), logit(p)))


def demand(group: AgentGroup, mu, p):
    return _scalar(demand_logodds(group, logit(mu), logit(p)))


def cara_limit_check(gamma: float, wealth: float, mu: float, p: float) -> float:
    """Relative gap between γ·x_CRRA/W and the CARA log-odds demand."""
    z = logit(mu) - logit(p)
    rescaled = gamma * demand_crra(gamma, wealth, mu, p) / wealth
    return abs(rescaled - z) / max(1.0, abs(z))


def foc_residual(group: AgentGroup, mu: float, p: float, x: float) -> float:
    """
    Relative residual of μ(1−p)U′(W+(1−p)x) = (1−μ)p·U′(W−px), compared in
    logs so that the check is scale-free.
    """
    if group.pref.is_cara:
        a = group.pref.risk
        log_lhs = np.log(mu) + np.log1p(-p) - a * (1.0 - p) * x
        log_rhs = np.log1p(-mu) + np.log(p) + a * p * x
    else:
        g, w = group.pref.risk, group.wealth
        up, down = w + (1.0 - p) * x, w - p * x
        if up <= 0 or down <= 0:
            return float("inf")
        log_lhs = np.log(mu) + np.log1p(-p) - g * np.log(up)
        log_rhs = np.log1p(-mu) + np.log(p) - g * np.log(down)
    return float(abs(np.expm1(log_lhs - log_rhs)))


def demand_curvature(group: AgentGroup, z, p: float):
    """Analytic ∂²x/∂z² at log-odds gap z; identically 0 for CARA."""
    z = np.asarray(z, dtype=float)
    if group.pref.is_cara:
        return _scalar(np.zeros_like(z))
    g, w = group.pref.risk, group.wealth
    r = np.exp(z / g)
    return _scalar(w / g**2 * r * (1.0 - p - r * p) / ((1.0 - p) + r * p) ** 3)


@dataclass(frozen=True)
class LinearityReport:
    """Second-difference signature of x(z) at fixed price."""

    z: np.ndarray
    second_differences: np.ndarray
    analytic_curvature: np.ndarray
    max_abs_second_difference: float
    scale: float
    inflection_z: float | None

    @property
    def is_linear(self) -> bool:
        return self.max_abs_second_difference <= 1e-10 * self.scale


def linearity_probe(pref: Preference, wealth: float, p: float,
                    z_grid: Sequence[float]) -> LinearityReport:
    """
    Probe log-odds linearity of demand: CARA demand is exactly linear in z,
    CRRA demand bends everywhere except at z = −γ·logit p.
    """
    z = np.sort(np.asarray(z_grid, dtype=float))
    if z.size < 3:
        raise InvalidInputError("need at least three probe points", n=z.size)
    group = AgentGroup(pref=pref, tau=1.0, wealth=wealth)
    x = demand_logodds(group, z + logit(p), logit(p))
    slope = np.diff(x) / np.diff(z)
    second = 2.0 * np.diff(slope) / (z[2:] - z[:-2])
    inflection = None if pref.is_cara else float(-pref.risk * logit(p))
    return LinearityReport(
        z=z,
        second_differences=second,
        analytic_curvature=np.atleast_1d(demand_curvature(group, z, p)),
        max_abs_second_difference=float(np.max(np.abs(second))),
        scale=float(max(1.0, np.max(np.abs(x)))),
        inflection_z=inflection,
    )
