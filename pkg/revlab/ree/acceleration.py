"""
revlab/ree/acceleration.py — Mixers and Newton–Krylov polishing for x = Φ(x).

Mixers are callables: given the current trial x and its image Φ(x) they
return the next trial.  DampedMixer is plain under-relaxation; AndersonMixer
keeps a window of past trials and residuals and extrapolates through the
least-squares combination of residual differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from shared.logger import get_logger

log = get_logger("revlab.ree.accel")


class DampedMixer:
    """x ← x + β·(Φ(x) − x)."""

    def __init__(self, damping: float) -> None:
        self.damping = float(damping)

    def __call__(self, trial: np.ndarray, image: np.ndarray) -> np.ndarray:
        return trial + self.damping * (image - trial)

    def reset(self) -> None:
        pass


class AndersonMixer:
    """
    Anderson (Pulay) mixing with memory m:

        x⁺ = x + β f − (ΔX + β ΔF)·γ,   γ = argmin ‖f − ΔF γ‖

    where f = Φ(x) − x and ΔX, ΔF hold differences of the last m trials and
    residuals.  Trials of any shape are mixed as flat vectors and the next
    trial comes back in the shape of the current one.  With fewer than two
    stored pairs it falls back to damping.
    """

    def __init__(self, damping: float, memory: int) -> None:
        self.damping = float(damping)
        self.memory = int(memory)
        self.trials: list[np.ndarray] = []
        self.residuals: list[np.ndarray] = []

    def reset(self) -> None:
        self.trials.clear()
        self.residuals.clear()

    def __call__(self, trial: np.ndarray, image: np.ndarray) -> np.ndarray:
        shape = np.shape(trial)
        x = np.array(trial, dtype=float).ravel()
        residual = np.asarray(image, dtype=float).ravel() - x
        if self.trials and self.trials[-1].size != x.size:
            self.reset()
        self.trials.append(x)
        self.residuals.append(residual)
        self.trials = self.trials[-(self.memory + 1):]
        self.residuals = self.residuals[-(self.memory + 1):]

        if len(self.trials) < 2:
            return (x + self.damping * residual).reshape(shape)

        dX = np.diff(np.stack(self.trials, axis=1), axis=1)
        dF = np.diff(np.stack(self.residuals, axis=1), axis=1)
        gamma, *_ = np.linalg.lstsq(dF, residual, rcond=None)
        new_trial = x + self.damping * residual - (dX + self.damping * dF) @ gamma
        if not np.all(np.isfinite(new_trial)):
            log.debug("Anderson step not finite; history cleared")
            self.reset()
            new_trial = x + self.damping * residual
        return new_trial.reshape(shape)


def make_mixer(damping: float, memory: int) -> DampedMixer | AndersonMixer:
    return AndersonMixer(damping, memory) if memory > 0 else DampedMixer(damping)


# ── Jacobian-free Newton–Krylov ──────────────────────────────────────────────

@dataclass(frozen=True)
class NewtonStep:
    x: np.ndarray
    residual: np.ndarray
    norm: float
    accepted: bool
    halvings: int
    inner_info: int


def newton_krylov_step(F: Callable[[np.ndarray], np.ndarray], x: np.ndarray, fx: np.ndarray,
                       fd_scale: float = 1e-7, restart: int = 20, max_inner: int = 50,
                       max_halvings: int = 8, inner_rtol: float = 1e-6) -> NewtonStep:
    """
    One globalised Newton step on F(x) = 0.  J·v is approximated by the
    forward difference (F(x + h v) − F(x))/h with h = fd_scale·(1 + ‖x‖)/‖v‖;
    the Newton system is solved by restarted GMRES; the step is halved until
    the sup-norm residual decreases.
    """
    n = x.size
    h_base = fd_scale * (1.0 + np.linalg.norm(x))

    def matvec(v: np.ndarray) -> np.ndarray:
        v = np.ravel(v)
        nv = np.linalg.norm(v)
        if nv == 0:
            return np.zeros_like(v)
        h = h_base / nv
        return (F(x + h * v) - fx) / h

    J = LinearOperator((n, n), matvec=matvec, dtype=float)
    maxiter = max(1, int(np.ceil(max_inner / restart)))
    step, info = gmres(J, -fx, rtol=inner_rtol, atol=0.0, restart=restart, maxiter=maxiter)

    norm0 = float(np.max(np.abs(fx)))
    lam = 1.0
    for halvings in range(max_halvings + 1):
        trial = x + lam * step
        f_trial = F(trial)
        norm = float(np.max(np.abs(f_trial)))
        if np.isfinite(norm) and norm < norm0:
            return NewtonStep(trial, f_trial, norm, True, halvings, info)
        lam *= 0.5
    return NewtonStep(x, fx, norm0, False, max_halvings, info)
