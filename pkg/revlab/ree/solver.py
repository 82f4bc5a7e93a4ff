"""
revlab/ree/solver.py — Rational-expectations fixed point by contour integration.

The iteration state is the logit price tensor.  One application of the map:

  1. Bayes: for every own-signal node and every price node, trace the level
     set of the agent's slice and update along it; fill nodes without a
     contour, then project the table onto the monotone cone.
  2. Clearing: every lattice cell clears with each agent's belief frozen at
     table(u_k, P[cell]), warm-started from the current price.

The price nodes are frozen for the whole run and span both the seed and the
fully-revealing price, so every iterate between them stays inside the
tables.  Each iteration measures the posterior residual (table against its
own Bayes image on active nodes); the loop stops on that same quantity the
returned diagnostics report.  Picard iterations (damped or Anderson-mixed)
bring it below picard_tol, after which Jacobian-free Newton–Krylov polishes
the root of F(x) = x − Φ(x).

Usage:
    from revlab.ree import SolverConfig, solve_ree
    sol = solve_ree(cfg, make_grid(20), SolverConfig.from_settings(damping=0.2))
    print(sol.diagnostics.status, sol.regression().deficit)
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Iterator, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from revlab.clearing import (
    MarketConfig,
    PriceTensor,
    clear_logodds,
    informed_share_price_tensor,
    no_learning_price_tensor,
)
from revlab.errors import AbortedIterationError, InvalidConfigError, InvalidInputError
from revlab.grid import SignalGrid, lattice_statistic, log_density, logistic, logit, u_marginal
from revlab.metrics import (
    DiagnosticsReport,
    LatticeBeliefs,
    RegressionReport,
    diagnostics,
    revelation_deficit,
)
from revlab.ree.acceleration import make_mixer, newton_krylov_step
from revlab.ree.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from revlab.ree.contour import own_slices, peer_indices, slice_evidence, trace_contour
from revlab.ree.projection import PosteriorTable, fill_inactive, price_grid, project_monotone
from shared.config import settings
from shared.logger import get_logger

log = get_logger("revlab.ree.solver")

PRICE_GRID_RULES = ("uniform-logit", "uniform-prob")
PRICE_NODES_PER_SIGNAL_NODE = 2   # price nodes default to 2·G − 1 over the wider hull
RESET_FACTOR = 10.0         # Anderson reset when residual exceeds best by this
DIVERGENCE_FACTOR = 1e3
MAX_INCREASES = 5
MAX_NEWTON_FAILURES = 3
CURVATURE_TOL = 1e-8


# ── Configuration ────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class SolverConfig:
    damping: float = 0.25
    anderson_memory: int = 6
    max_iter: int = 400
    picard_tol: float = 1e-4
    strict_tol: float = 1e-12
    price_grid_size: int | None = None
    price_grid_rule: str = "uniform-logit"
    newton: bool = True
    clear_tol: float = 1e-14
    max_flagged_share: float = 0.05
    log_every: int = 10
    checkpoint_path: str | None = None
    checkpoint_every: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.damping <= 1.0:
            raise InvalidConfigError("damping must lie in (0, 1]", damping=self.damping)
        if self.anderson_memory < 0:
            raise InvalidConfigError("Anderson memory must be nonnegative",
                                     anderson_memory=self.anderson_memory)
        if self.max_iter < 1:
            raise InvalidConfigError("max_iter must be positive", max_iter=self.max_iter)
        for name in ("picard_tol", "strict_tol", "clear_tol"):
            if getattr(self, name) <= 0:
                raise InvalidConfigError("tolerances must be positive", **{name: getattr(self, name)})
        if self.price_grid_rule not in PRICE_GRID_RULES:
            raise InvalidConfigError("unknown price grid rule", rule=self.price_grid_rule,
                                     allowed=PRICE_GRID_RULES)
        if self.price_grid_size is not None and self.price_grid_size < 3:
            raise InvalidConfigError("price grid needs at least 3 nodes",
                                     price_grid_size=self.price_grid_size)

    @classmethod
    def from_settings(cls, **overrides: Any) -> "SolverConfig":
        """Defaults from the environment (.env), then explicit overrides."""
        known = {f.name for f in fields(cls)}
        unknown = set(overrides) - known
        if unknown:
            raise InvalidConfigError("unknown solver options", options=sorted(unknown))
        base = {
            "damping": settings.damping,
            "anderson_memory": settings.anderson_memory,
            "max_iter": settings.max_iter,
            "picard_tol": settings.picard_tol,
            "strict_tol": settings.strict_tol,
            "checkpoint_every": settings.checkpoint_every,
        }
        base.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**base)


# ── Symmetrisation ───────────────────────────────────────────────────────────

def symmetrise(P, cfg: MarketConfig | None = None):
    """
    Average over all axis permutations.  The permuted values are summed in
    sorted order, so every cell of an orbit receives the identical sum and
    the output is exactly symmetric.
    """
    if cfg is not None and not cfg.is_homogeneous:
        raise InvalidConfigError("symmetrisation requires homogeneous groups",
                                 taus=cfg.taus.tolist())
    arr = P.log_odds if isinstance(P, PriceTensor) else np.asarray(P, dtype=float)
    perms = list(itertools.permutations(range(arr.ndim)))
    stack = np.stack([np.transpose(arr, perm) for perm in perms])
    out = np.sort(stack, axis=0).sum(axis=0) / len(perms)
    return PriceTensor(out) if isinstance(P, PriceTensor) else out


# ── The map ──────────────────────────────────────────────────────────────────

def _require_three(cfg: MarketConfig) -> None:
    if cfg.K != 3:
        raise InvalidConfigError("the contour fixed point needs exactly three groups", K=cfg.K)


def private_tables(cfg: MarketConfig, grid: SignalGrid,
                   p_log_nodes: np.ndarray) -> tuple[PosteriorTable, ...]:
    """No-learning beliefs Λ(τ_k u) on the (u, p) lattice, constant in p."""
    n = 1 if cfg.is_homogeneous else cfg.K
    return tuple(
        PosteriorTable(
            log_odds=np.repeat((cfg.taus[k] * grid.nodes)[:, None], p_log_nodes.size, axis=1),
            u_nodes=grid.nodes, p_log_nodes=p_log_nodes)
        for k in range(n))


class ContourMap:
    """Φ on logit price tensors, plus its two halves for apply_map."""

    def __init__(self, cfg: MarketConfig, grid: SignalGrid, solver: SolverConfig,
                 p_log_nodes: np.ndarray, informed_share: float = 1.0) -> None:
        _require_three(cfg)
        if not 0.0 < informed_share <= 1.0:
            raise InvalidConfigError("informed share must lie in (0, 1]", lam=informed_share)
        self.informed_share = float(informed_share)
        self.cfg = cfg
        self.grid = grid
        self.solver = solver
        self.p_log_nodes = np.asarray(p_log_nodes, dtype=float)
        self.shared = cfg.is_homogeneous
        self.agents = [0] if self.shared else list(range(cfg.K))
        self.cell_index = [ix.ravel() for ix in np.indices((grid.size,) * cfg.K)]
        self.u_weights = [u_marginal(grid, t) for t in cfg.taus]

    def symmetric(self, x: np.ndarray) -> np.ndarray:
        return symmetrise(x) if self.shared else x

    def table_for(self, tables: Sequence[PosteriorTable], k: int) -> PosteriorTable:
        return tables[0] if len(tables) == 1 else tables[k]

    def posterior_tables(self, lP: np.ndarray) -> tuple[PosteriorTable, ...]:
        nodes, taus = self.grid.nodes, self.cfg.taus
        tables = []
        for k in self.agents:
            a, b = peer_indices(k, self.cfg.K)
            ev = slice_evidence(own_slices(lP, k), self.p_log_nodes, self.grid, taus[a], taus[b])
            private = taus[k] * nodes
            raw = ev.log_odds(taus[k], nodes)
            filled = fill_inactive(raw, ev.active, self.p_log_nodes, private)
            table = PosteriorTable(log_odds=filled, u_nodes=nodes,
                                   p_log_nodes=self.p_log_nodes, active=ev.active)
            tables.append(project_monotone(table, self.u_weights[k]))
        return tuple(tables)

    def clear(self, tables: Sequence[PosteriorTable], lP: np.ndarray) -> tuple[np.ndarray, int]:
        flat = lP.ravel()
        lmu = np.stack([self.table_for(tables, k).at(self.cell_index[k], flat)
                        for k in range(self.cfg.K)])
        masses = None
        if self.informed_share < 1.0:
            # uninformed mass holds the price-only posterior
            uninformed = price_posterior(PriceTensor(lP), self.cfg, self.grid,
                                         self.p_log_nodes).at(flat)
            lmu = np.stack([lmu, np.broadcast_to(uninformed, lmu.shape)], axis=1)
            masses = np.array([self.informed_share, 1.0 - self.informed_share])
        root, _, failed = clear_logodds(self.cfg, lmu, self.solver.clear_tol, guess=flat,
                                        masses=masses)
        n_failed = int(failed.sum())
        if n_failed > self.solver.max_flagged_share * flat.size:
            raise AbortedIterationError("too many cells failed to clear",
                                        failed=n_failed, cells=int(flat.size))
        if n_failed:
            log.debug("%d cells kept their previous price", n_failed)
        return np.where(failed, flat, root).reshape(lP.shape), n_failed

    def __call__(self, lP: np.ndarray) -> np.ndarray:
        nxt, _ = self.clear(self.posterior_tables(lP), lP)
        return self.symmetric(nxt)


@dataclass(frozen=True)
class MapResult:
    tables: tuple[PosteriorTable, ...]
    price: PriceTensor
    residual: np.ndarray   # (n_tables, G_u, G_p) posterior change, zero off the active set
    active: np.ndarray
    flagged_cells: int

    @property
    def residual_inf(self) -> float:
        return float(np.max(np.abs(self.residual))) if self.residual.size else 0.0


def apply_map(tables: Sequence[PosteriorTable], price: PriceTensor, cfg: MarketConfig,
              grid: SignalGrid, solver: SolverConfig | None = None,
              contour_map: ContourMap | None = None) -> MapResult:
    """
    One application from a frozen belief table: clear every cell at the
    table's beliefs (no symmetrisation), then redo Bayes on the new price.
    """
    solver = solver or SolverConfig.from_settings()
    tables = tuple(tables)
    cm = contour_map or ContourMap(cfg, grid, solver, tables[0].p_log_nodes)
    nxt, flagged = cm.clear(tables, price.log_odds)
    new_tables = cm.posterior_tables(nxt)
    if len(tables) != len(new_tables):
        raise InvalidInputError("one table per agent for heterogeneous groups",
                                expected=len(new_tables), got=len(tables))
    active = np.stack([t.active for t in new_tables])
    diff = np.stack([n.mu - o.mu for n, o in zip(new_tables, tables)])
    return MapResult(tables=new_tables, price=PriceTensor(nxt),
                     residual=np.where(active, diff, 0.0), active=active,
                     flagged_cells=flagged)


# ── Solution ─────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class REESolution:
    cfg: MarketConfig
    grid: SignalGrid
    tables: tuple[PosteriorTable, ...]
    price: PriceTensor
    diagnostics: DiagnosticsReport
    history: list[tuple[int, str, float]] = field(default_factory=list)
    iterations: int = 0
    elapsed: float = 0.0
    informed_share: float = 1.0

    @property
    def table(self) -> PosteriorTable:
        return self.tables[0]

    def agent_table(self, k: int) -> PosteriorTable:
        return self.tables[0] if len(self.tables) == 1 else self.tables[k]

    def beliefs(self) -> LatticeBeliefs:
        """Every agent's converged log-odds belief at every lattice cell."""
        flat = self.price.log_odds.ravel()
        cells = np.indices(self.price.shape)
        lmu = np.stack([self.agent_table(k).at(cells[k].ravel(), flat).reshape(self.price.shape)
                        for k in range(self.cfg.K)])
        return LatticeBeliefs(price=self.price, log_odds=lmu)

    def regression(self) -> RegressionReport:
        return revelation_deficit(self.price, self.grid, self.cfg.taus)

    def __iter__(self) -> Iterator[Any]:
        yield self.table
        yield self.price
        yield self.diagnostics


def _seed_price(cfg: MarketConfig, grid: SignalGrid, seed, tol: float,
                informed_share: float = 1.0) -> PriceTensor:
    if isinstance(seed, PriceTensor):
        if seed.shape != (grid.size,) * cfg.K:
            raise InvalidInputError("seed tensor does not match the lattice", shape=seed.shape)
        return seed
    if seed == "no-learning":
        if informed_share < 1.0:
            return informed_share_price_tensor(cfg, grid, informed_share, tol)
        return no_learning_price_tensor(cfg, grid, tol)
    if seed == "fully-revealing":
        return fully_revealing_price(cfg, grid, tol)
    raise InvalidConfigError("unknown seed", seed=seed,
                             allowed=("no-learning", "fully-revealing", "PriceTensor"))


def price_nodes_for(cfg: MarketConfig, grid: SignalGrid, solver: SolverConfig,
                    *tensors: np.ndarray) -> np.ndarray:
    """
    Frozen price nodes: the hull of the given log-odds tensors and the
    fully-revealing price, which bounds every iterate between them.
    """
    fr = fully_revealing_price(cfg, grid, solver.clear_tol).log_odds
    ranges = [(float(t.min()), float(t.max())) for t in (*tensors, fr)]
    size = solver.price_grid_size or PRICE_NODES_PER_SIGNAL_NODE * grid.size - 1
    return price_grid(ranges, size, solver.price_grid_rule)


def _finish(cm: ContourMap, x: np.ndarray, solver: SolverConfig, diverged: bool,
            history: list, iterations: int, started: float) -> REESolution:
    tables = cm.posterior_tables(x)
    mapped = apply_map(tables, PriceTensor(x), cm.cfg, cm.grid, solver, contour_map=cm)
    diag = diagnostics(mapped.residual, np.stack([t.log_odds for t in tables]),
                       mapped.active, solver.strict_tol, diverged)
    return REESolution(cfg=cm.cfg, grid=cm.grid, tables=tables, price=PriceTensor(x),
                       diagnostics=diag, history=history, iterations=iterations,
                       elapsed=time.time() - started, informed_share=cm.informed_share)


def _write_checkpoint(path: str | Path, cm: ContourMap, x: np.ndarray, iteration: int,
                      history: list, tables: Sequence[PosteriorTable] | None = None) -> None:
    tables = tables or cm.posterior_tables(x)
    save_checkpoint(path, u_nodes=cm.grid.nodes, p_log_nodes=cm.p_log_nodes,
                    tables=np.stack([t.log_odds for t in tables]), price_log_odds=x,
                    iteration=iteration, history=history,
                    meta={"taus": cm.cfg.taus.tolist(),
                          "groups": [g.pref.label() for g in cm.cfg.groups]})


def _check_resumable(ck: Checkpoint, cfg: MarketConfig, grid: SignalGrid, path) -> None:
    if ck.u_nodes.shape != grid.nodes.shape or not np.allclose(ck.u_nodes, grid.nodes):
        raise InvalidInputError("checkpoint was written on a different signal grid",
                                path=str(path))
    if ck.price_log_odds.shape != (grid.size,) * cfg.K:
        raise InvalidInputError("checkpoint price tensor does not match the lattice",
                                path=str(path), shape=ck.price_log_odds.shape)
    taus = ck.meta.get("taus")
    if taus is not None and (len(taus) != cfg.K or not np.allclose(taus, cfg.taus)):
        raise InvalidInputError("checkpoint was written for other signal precisions",
                                path=str(path), saved=taus, requested=cfg.taus.tolist())
    groups = ck.meta.get("groups")
    labels = [g.pref.label() for g in cfg.groups]
    if groups is not None and list(groups) != labels:
        raise InvalidInputError("checkpoint was written for other preferences",
                                path=str(path), saved=groups, requested=labels)


def solve_ree(cfg: MarketConfig, grid: SignalGrid, solver: SolverConfig | None = None,
              seed: str | PriceTensor = "no-learning",
              resume_from: str | Path | None = None,
              informed_share: float = 1.0) -> REESolution:
    """
    Iterate the contour map to a fixed point.

    Every iteration measures the posterior residual of the current price
    (the quantity the returned diagnostics report) and stops once it is
    below strict_tol, returning the price that clears at those tables.  Not
    getting there within max_iter returns the best such price with status
    fallback; a non-finite or steadily rising residual ends the run as
    diverged (still returning the best price seen).
    """
    solver = solver or SolverConfig.from_settings()
    _require_three(cfg)
    started = time.time()
    history: list[tuple[int, str, float]] = []
    it = 0

    if resume_from is not None:
        ck = load_checkpoint(resume_from)
        _check_resumable(ck, cfg, grid, resume_from)
        x, p_nodes = ck.price_log_odds, ck.p_log_nodes
        history, it = list(ck.history), ck.iteration
        log.info("Resuming from %s at iteration %d", resume_from, it)
    else:
        x = _seed_price(cfg, grid, seed, solver.clear_tol, informed_share).log_odds
        p_nodes = price_nodes_for(cfg, grid, solver, x)

    cm = ContourMap(cfg, grid, solver, p_nodes, informed_share)
    x = cm.symmetric(np.array(x, dtype=float))
    shape = x.shape

    def F(z: np.ndarray) -> np.ndarray:
        z = z.reshape(shape)
        try:
            return (z - cm(z)).ravel()
        except AbortedIterationError:
            return np.full(z.size, np.inf)

    log.info("REE solve: %s, τ=%s, G=%d, G_p=%d, damping=%.2f, Anderson m=%d",
             "/".join(g.pref.label() for g in cfg.groups), cfg.taus.tolist(), grid.size,
             p_nodes.size, solver.damping, solver.anderson_memory)

    mixer = make_mixer(solver.damping, solver.anderson_memory)
    best_x, best_r = x, np.inf
    gx = x
    first_r: float | None = None
    prev_r = np.inf
    increases = newton_failures = 0
    phase = "picard"
    converged = diverged = False

    while it < solver.max_iter:
        tables = cm.posterior_tables(x)
        try:
            mapped = apply_map(tables, PriceTensor(x), cfg, grid, solver, contour_map=cm)
        except AbortedIterationError as exc:
            log.error("clearing aborted at iteration %d: %s", it, exc)
            diverged = True
            break
        gx = cm.symmetric(mapped.price.log_odds)
        r = mapped.residual_inf
        history.append((it, phase, r))
        log.debug("iter %d [%s] posterior residual %.3e, %d cells flagged",
                  it, phase, r, mapped.flagged_cells)
        if solver.log_every and it % solver.log_every == 0:
            log.info("  iter %4d  %-6s  residual %.3e", it, phase, r)

        if not (np.isfinite(r) and np.all(np.isfinite(gx))):
            log.error("map image is not finite at iteration %d", it)
            diverged = True
            break
        first_r = r if first_r is None else first_r
        if r < best_r:
            best_x, best_r = gx, r
        if r < solver.strict_tol:
            converged = True
            break
        increases = increases + 1 if r > prev_r else 0
        prev_r = r
        if increases >= MAX_INCREASES or (phase == "picard" and r > DIVERGENCE_FACTOR * first_r):
            log.error("residual keeps rising (%.3e at iteration %d); giving up", r, it)
            diverged = True
            break

        it += 1
        if solver.checkpoint_path and solver.checkpoint_every and it % solver.checkpoint_every == 0:
            _write_checkpoint(solver.checkpoint_path, cm, x, it, history, tables)

        if phase == "picard" and solver.newton and r < solver.picard_tol:
            phase = "newton"
            log.info("  switching to Newton–Krylov at iteration %d (residual %.3e)", it, r)

        if phase == "newton":
            step = newton_krylov_step(F, x.ravel(), (x - gx).ravel())
            if step.accepted:
                x = cm.symmetric(step.x.reshape(shape))
                newton_failures = 0
                continue
            newton_failures += 1
            log.debug("Newton step rejected (gmres info %d); damped step instead", step.inner_info)
            if newton_failures >= MAX_NEWTON_FAILURES:
                phase = "picard"
                mixer.reset()
                log.info("  Newton stalled; back to Picard at iteration %d", it)
            x = cm.symmetric(x + solver.damping * (gx - x))
            continue

        if solver.anderson_memory and r > RESET_FACTOR * best_r:
            mixer.reset()
            log.info("  Anderson history reset at iteration %d (residual %.3e)", it, r)
        x = cm.symmetric(mixer(x, gx))

    if not converged and not diverged:
        log.warning("no convergence in %d iterations; best posterior residual %.3e",
                    solver.max_iter, best_r)
    # a table state is priced by its cleared image
    x_star = gx if converged else best_x
    if solver.checkpoint_path:
        _write_checkpoint(solver.checkpoint_path, cm, x_star, it, history)

    sol = _finish(cm, x_star, solver, diverged, history, it, started)
    log.info("REE done: status=%s residual=%.3e violations=%d iterations=%d (%.1fs)",
             sol.diagnostics.status.value, sol.diagnostics.residual_inf,
             sol.diagnostics.mono_violations, it, sol.elapsed)
    return sol


# ── Fully-revealing benchmark ────────────────────────────────────────────────

def fully_revealing_price(cfg: MarketConfig, grid: SignalGrid,
                          tol: float | None = None) -> PriceTensor:
    """Clearing price when every agent holds the full-information posterior Λ(T⋆)."""
    T = lattice_statistic(grid, cfg.taus)
    if cfg.supply == 0:
        return PriceTensor(T.copy())
    lmu = np.broadcast_to(T.ravel(), (cfg.K, T.size))
    lp, _, failed = clear_logodds(cfg, lmu, tol)
    if failed.any():
        raise InvalidConfigError("fully-revealing price does not clear", cells=int(failed.sum()))
    return PriceTensor(lp.reshape(T.shape))


def solve_fully_revealing(cfg: MarketConfig, grid: SignalGrid,
                          solver: SolverConfig | None = None) -> REESolution:
    """
    The fully-revealing price with its contour posteriors and the posterior
    residual of one map application (near zero: FR is a fixed point).
    """
    solver = solver or SolverConfig.from_settings()
    started = time.time()
    x = fully_revealing_price(cfg, grid, solver.clear_tol).log_odds
    cm = ContourMap(cfg, grid, solver, price_nodes_for(cfg, grid, solver, x))
    return _finish(cm, x, solver, False, [], 0, started)


# ── Read-outs ────────────────────────────────────────────────────────────────

def posteriors_at(solution: REESolution, u: Sequence[float]) -> tuple[float, ...]:
    """(μ_1, …, μ_K, price) at a signal profile, interpolating off the nodes."""
    u = np.asarray(u, dtype=float)
    K = solution.cfg.K
    if u.shape != (K,):
        raise InvalidInputError("one signal per group required", K=K, got=u.shape)
    nodes = solution.grid.nodes
    price_interp = RegularGridInterpolator((nodes,) * K, solution.price.log_odds,
                                           bounds_error=False, fill_value=None)
    lp = float(price_interp(u[None, :])[0])
    mus = [float(logistic(solution.agent_table(k).interpolator()([[u[k], lp]])[0]))
           for k in range(K)]
    return (*mus, float(logistic(lp)))


@dataclass(frozen=True)
class PricePosterior:
    """P(v=1 | price) on the price nodes, from level-set Bayes over all signals."""

    p_log_nodes: np.ndarray
    log_odds: np.ndarray
    active: np.ndarray

    def at(self, lp: np.ndarray) -> np.ndarray:
        table = PosteriorTable(self.log_odds[None, :], np.zeros(1), self.p_log_nodes)
        return table.at(np.zeros(np.shape(lp), dtype=int), np.asarray(lp, dtype=float))


def price_posterior(price: PriceTensor, cfg: MarketConfig, grid: SignalGrid,
                    p_log_nodes: np.ndarray | None = None) -> PricePosterior:
    """
    Posterior of an observer who sees only the price: the contour evidence
    of agent 0's slices summed over the own signal with its state density.
    """
    _require_three(cfg)
    lP = price.log_odds
    if p_log_nodes is None:
        p_log_nodes = price_grid([(float(lP.min()), float(lP.max()))], grid.size)
    taus = cfg.taus
    ev = slice_evidence(own_slices(lP, 0), p_log_nodes, grid, taus[1], taus[2])
    with np.errstate(divide="ignore", invalid="ignore"):
        log_m = [np.logaddexp.reduce(log_density(taus[0], grid.nodes, v)[:, None] + a, axis=0)
                 for v, a in ((0, ev.log_a0), (1, ev.log_a1))]
        raw = log_m[1] - log_m[0]
    active = np.isfinite(raw)
    filled = fill_inactive(np.where(active, raw, 0.0)[None, :], active[None, :],
                           p_log_nodes, np.array([0.0]))[0]
    return PricePosterior(p_log_nodes=np.asarray(p_log_nodes), log_odds=filled, active=active)


# ── Contour curvature ────────────────────────────────────────────────────────

@dataclass(frozen=True)
class LevelCurvature:
    level: float
    n_points: int
    second_differences: np.ndarray
    sign: str
    note: str = ""

    @property
    def max_abs(self) -> float:
        d = self.second_differences
        return float(np.max(np.abs(d))) if d.size else 0.0

    @property
    def mean(self) -> float:
        d = self.second_differences
        return float(np.mean(d)) if d.size else 0.0


@dataclass(frozen=True)
class CurvatureReport:
    own_index: int
    levels: list[LevelCurvature]
    critical_level: float | None

    def as_rows(self) -> list[dict[str, Any]]:
        return [{"level": lc.level, "points": lc.n_points, "sign": lc.sign,
                 "max_abs_second_difference": lc.max_abs, "note": lc.note}
                for lc in self.levels]


def _curvature_sign(d: np.ndarray, tol: float) -> str:
    if np.all(np.abs(d) <= tol):
        return "linear"
    if np.all(d > -tol):
        return "convex"
    if np.all(d < tol):
        return "concave"
    return "mixed"


def contour_curvature_report(price: PriceTensor, grid: SignalGrid, own_index: int,
                             levels: Sequence[float], agent: int = 0,
                             tol: float = CURVATURE_TOL) -> CurvatureReport:
    """
    Second differences of the traced u_b-versus-u_a curve of one slice at each
    level (row sweeps, interior crossings only), with the level at which the
    sign flips.
    """
    slice_ = own_slices(price.log_odds, agent)[own_index]
    h = grid.spacing
    out = []
    for level in sorted(float(p) for p in levels):
        trace = trace_contour(slice_, float(logit(level)), grid, own_index, log_odds=True)
        pts = trace.points(axis=0)
        inside = (pts[:, 1] >= grid.u_min) & (pts[:, 1] <= grid.u_max)
        pts = pts[inside]
        if np.unique(pts[:, 0]).size != pts.shape[0]:
            out.append(LevelCurvature(level, pts.shape[0], np.empty(0), "skipped",
                                      "several crossings on one sweep line"))
            continue
        pts = pts[np.argsort(pts[:, 0])]
        if pts.shape[0] < 3:
            out.append(LevelCurvature(level, pts.shape[0], np.empty(0), "skipped",
                                      "fewer than 3 crossings"))
            continue
        gaps = np.diff(pts[:, 0])
        consecutive = np.isclose(gaps[:-1], h) & np.isclose(gaps[1:], h)
        d2 = (pts[2:, 1] - 2.0 * pts[1:-1, 1] + pts[:-2, 1])[consecutive]
        if d2.size == 0:
            out.append(LevelCurvature(level, pts.shape[0], d2, "skipped",
                                      "no three consecutive crossings"))
            continue
        out.append(LevelCurvature(level, pts.shape[0], d2, _curvature_sign(d2, tol)))

    critical = None
    signed = [lc for lc in out if lc.sign in ("convex", "concave")]
    for lo, hi in zip(signed, signed[1:]):
        if lo.sign != hi.sign:
            w = lo.mean / (lo.mean - hi.mean)
            critical = float(logistic((1 - w) * logit(lo.level) + w * logit(hi.level)))
            break
    return CurvatureReport(own_index=own_index, levels=out, critical_level=critical)
