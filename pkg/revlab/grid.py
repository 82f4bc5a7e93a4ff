"""
revlab/grid.py — Signal lattice, Gaussian signal densities and ex-ante weights.

Centred signals u = s − ½ carry state v ∈ {0, 1} through the density
f_v(u) = sqrt(τ/2π)·exp(−τ/2·(u − v + ½)²), so log f1/f0 = τ·u exactly.
Every other module consumes the helpers here.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.special import expit, logsumexp

from revlab.errors import InvalidConfigError, InvalidInputError

LOGIT_EPS = 1e-15


# ── Logistic / logit ─────────────────────────────────────────────────────────

def logistic(z):
    """Λ(z) = 1/(1+e^{−z}); overflow-free for any real z."""
    return expit(z)


def logit_flagged(q):
    """Return (logit(q), saturated) with q clamped to [ε, 1−ε]."""
    q = np.asarray(q, dtype=float)
    saturated = (q < LOGIT_EPS) | (q > 1.0 - LOGIT_EPS)
    qc = np.clip(q, LOGIT_EPS, 1.0 - LOGIT_EPS)
    z = np.log(qc) - np.log1p(-qc)
    if z.ndim == 0:
        return float(z), bool(saturated)
    return z, saturated


def logit(q):
    """logit(q) = ln(q/(1−q)), clamped away from 0 and 1."""
    return logit_flagged(q)[0]


# ── Signal grid ──────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class SignalGrid:
    """Uniform, symmetric grid of centred-signal nodes on [−u_max, u_max]."""

    size: int
    u_max: float

    @property
    def u_min(self) -> float:
        return -self.u_max

    @cached_property
    def nodes(self) -> np.ndarray:
        nodes = np.linspace(-self.u_max, self.u_max, self.size)
        nodes.setflags(write=False)
        return nodes

    @property
    def spacing(self) -> float:
        return 2.0 * self.u_max / (self.size - 1)


def make_grid(G: int, u_max: float = 4.0) -> SignalGrid:
    if int(G) != G or G < 2:
        raise InvalidConfigError("grid needs at least two nodes", G=G)
    if not u_max > 0:
        raise InvalidConfigError("u_max must be positive", u_max=u_max)
    return SignalGrid(size=int(G), u_max=float(u_max))


# ── Densities ────────────────────────────────────────────────────────────────

def log_density(tau: float, u, v: int):
    """log f_v(u) for precision τ."""
    u = np.asarray(u, dtype=float)
    return 0.5 * np.log(tau / (2.0 * np.pi)) - 0.5 * tau * (u - v + 0.5) ** 2


@dataclass(frozen=True)
class StateDensityPair:
    """The two state-conditional signal densities at precision τ."""

    tau: float

    def __post_init__(self) -> None:
        if not self.tau > 0:
            raise InvalidConfigError("precision must be positive", tau=self.tau)

    def f0(self, u):
        return np.exp(log_density(self.tau, u, 0))

    def f1(self, u):
        return np.exp(log_density(self.tau, u, 1))

    def log_ratio(self, u):
        """log f1(u)/f0(u) from the densities themselves (equals τ·u)."""
        return log_density(self.tau, u, 1) - log_density(self.tau, u, 0)


def loglik_ratio(tau: float, u):
    """Private log-likelihood ratio log f1(u)/f0(u) = τ·u."""
    z = tau * np.asarray(u, dtype=float)
    return float(z) if z.ndim == 0 else z


def sufficient_statistic(tau: Sequence[float], u: Sequence[float]) -> float:
    """T⋆ = Σ τ_k u_k."""
    tau = np.asarray(tau, dtype=float)
    u = np.asarray(u, dtype=float)
    if tau.shape != u.shape:
        raise InvalidInputError("τ and u lengths differ", tau=tau.shape, u=u.shape)
    return float(np.dot(tau, u))


def private_posterior(tau: float, u):
    """μ = Λ(τu), the posterior of an agent who sees only its own signal."""
    return logistic(loglik_ratio(tau, u))


# ── Lattice tensors ──────────────────────────────────────────────────────────

def _broadcast_axis(values: np.ndarray, axis: int, ndim: int) -> np.ndarray:
    shape = [1] * ndim
    shape[axis] = values.size
    return values.reshape(shape)


def lattice_statistic(grid: SignalGrid, tau: Sequence[float]) -> np.ndarray:
    """T⋆ evaluated at every cell of the G^K lattice."""
    tau = np.asarray(tau, dtype=float)
    K = tau.size
    out = np.zeros((grid.size,) * K)
    for k in range(K):
        out = out + _broadcast_axis(tau[k] * grid.nodes, k, K)
    return out


def _state_log_products(grid: SignalGrid, tau: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    K = tau.size
    log_p0 = np.zeros((grid.size,) * K)
    log_p1 = np.zeros((grid.size,) * K)
    for k in range(K):
        log_p0 = log_p0 + _broadcast_axis(log_density(tau[k], grid.nodes, 0), k, K)
        log_p1 = log_p1 + _broadcast_axis(log_density(tau[k], grid.nodes, 1), k, K)
    return log_p0, log_p1


def joint_weights(grid: SignalGrid, tau: Sequence[float]) -> np.ndarray:
    """
    Ex-ante probability of each lattice cell under the uniform prior:
    w ∝ ½·Π f1(u_k) + ½·Π f0(u_k), normalised to sum to one.
    """
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0):
        raise InvalidConfigError("precisions must be positive", tau=tau.tolist())
    log_p0, log_p1 = _state_log_products(grid, tau)
    log_w = np.logaddexp(log_p0, log_p1)
    log_w -= logsumexp(log_w)
    return np.exp(log_w)


def state_posterior(grid: SignalGrid, tau: Sequence[float]) -> np.ndarray:
    """P(v=1 | all signals) = Λ(T⋆) per lattice cell."""
    return logistic(lattice_statistic(grid, tau))


def u_marginal(grid: SignalGrid, tau: float) -> np.ndarray:
    """Ex-ante marginal probability of each node for one signal."""
    log_m = np.logaddexp(log_density(tau, grid.nodes, 0), log_density(tau, grid.nodes, 1))
    return np.exp(log_m - logsumexp(log_m))
