"""
revlab/experiments.py — Table and figure pipelines.

Every experiment id maps to one function taking a RunConfig and returning an
ExperimentResult (a pandas frame plus a summary dict).  run_experiment wraps
it the same way for every id:

  1. Validate the run configuration
  2. Compute the table / data series
  3. Write the artifact (CSV or JSON) to the output directory
  4. Save a JSON run snapshot under <out>/runs/

Usage:
    from revlab.experiments import RunConfig, run_experiment
    run_experiment(RunConfig(experiment="table-smooth", grid=20))
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np
import pandas as pd

from revlab.clearing import MarketConfig, clear_market, no_learning_price_tensor
from revlab.econ import (
    gs_equilibrium,
    value_ladder,
    value_of_information,
    with_precision,
)
from revlab.errors import InvalidConfigError
from revlab.grid import SignalGrid, lattice_statistic, make_grid, private_posterior
from revlab.mechanisms import BASELINE, ORDERING, ordering_check, run_mechanism
from revlab.metrics import (
    expected_volume,
    jensen_series,
    revelation_deficit,
)
from revlab.preferences import Preference
from revlab.ree.contour import own_slices, trace_contour
from revlab.ree.solver import (
    REESolution,
    SolverConfig,
    contour_curvature_report,
    fully_revealing_price,
    posteriors_at,
    solve_ree,
)
from shared.config import settings
from shared.logger import get_logger

log = get_logger("revlab.experiments")

SMOOTH_GAMMAS = (0.1, 0.3, 0.5, 1.0, 3.0, 10.0)
SMOOTH_TAUS = (0.5, 1.0, 2.0)
REE_GAMMAS = (0.3, 0.5, 1.0, 2.0, 4.0)
GRID_LADDER = (12, 14, 16, 18, 20)
VOLUME_GAMMAS = (0.1, 0.25, 0.5, 1.4, 2.0)
KNIFE_EDGE_GAMMAS = (0.5, 1.0, 4.0)
KNIFE_EDGE_TAUS = (0.25, 0.5, 1.0, 2.0, 3.0, 4.0)
PANEL_TAUS = (0.5, 1.0, 2.0, 4.0, 8.0)
VALUE_TAUS = (0.05, 0.1, 0.25, 0.5, 1.0, 2.0, 4.0)
JENSEN_TAUS = (0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0)
CURVATURE_LEVELS = (0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8)
CONTOUR_LEVELS = (0.25, 0.375, 0.5, 0.625, 0.75)
ROBUSTNESS_KS = (2, 3, 4, 5, 6)
MAX_LATTICE_CELLS = 2_000_000

RESIDUAL_COLUMNS = frozenset({"residual", "exact", "leading", "next_order", "remainder",
                              "max_abs_second_difference"})
FORMATS = ("csv", "json")


# ═══════════════════════════════════════════════════════════════════════════════
# RUN CONFIGURATION
# ═══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class RunConfig:
    """One experiment invocation: id, economy, solver settings, output."""

    experiment: str
    preference: str = "crra"
    gamma: float = 0.5
    alpha: float = 1.0
    tau: float = 2.0
    grid: int = field(default_factory=lambda: settings.grid_size)
    k: int = 3
    wealth: float = 1.0
    supply: float = 0.0
    lam: float = 1.0
    cost: float | None = None
    u: tuple[float, ...] = (1.0, -1.0, 1.0)
    damping: float | None = None
    anderson: int | None = None
    max_iter: int | None = None
    tol: float | None = None
    seed_posterior: str = "no-learning"
    with_ree: bool = False
    figure: str | None = None
    resume: str | None = None
    checkpoint: str | None = None
    output: str | None = None
    format: str | None = None
    threads: int = field(default_factory=lambda: settings.threads)

    def __post_init__(self) -> None:
        object.__setattr__(self, "u", tuple(float(x) for x in self.u))

    @classmethod
    def from_mapping(cls, data: dict[str, Any]) -> "RunConfig":
        """Flat key/value mapping (JSON config file or request body)."""
        known = {f.name for f in fields(cls)}
        clean = {str(k).replace("-", "_"): v for k, v in data.items()}
        unknown = sorted(set(clean) - known)
        if unknown:
            raise InvalidConfigError("unknown configuration keys", keys=unknown)
        if "u" in clean and isinstance(clean["u"], str):
            clean["u"] = tuple(float(x) for x in clean["u"].split(","))
        return cls(**clean)

    def merged(self, overrides: dict[str, Any]) -> "RunConfig":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def validate(self) -> "RunConfig":
        if self.experiment not in EXPERIMENTS:
            raise InvalidConfigError("unknown experiment", experiment=self.experiment,
                                     known=sorted(EXPERIMENTS))
        if self.preference not in ("crra", "cara"):
            raise InvalidConfigError("preference must be crra or cara", preference=self.preference)
        for name in ("gamma", "alpha", "tau", "wealth"):
            if not getattr(self, name) > 0:
                raise InvalidConfigError(f"{name} must be positive", **{name: getattr(self, name)})
        if self.grid < 3:
            raise InvalidConfigError("grid needs at least 3 nodes", grid=self.grid)
        if self.k < 1:
            raise InvalidConfigError("group count must be positive", k=self.k)
        if self.k != 3 and self.experiment not in ("no-learning", "robustness-k", "jensen"):
            raise InvalidConfigError("this experiment needs three groups", k=self.k,
                                     experiment=self.experiment)
        if self.supply < 0:
            raise InvalidConfigError("supply must be nonnegative", supply=self.supply)
        if not 0.0 <= self.lam <= 1.0:
            raise InvalidConfigError("lambda must lie in [0, 1]", lam=self.lam)
        if self.experiment == "ree" and self.lam == 0.0:
            raise InvalidConfigError("an REE needs a positive informed share", lam=self.lam)
        if self.cost is not None and not self.cost > 0:
            raise InvalidConfigError("cost must be positive", cost=self.cost)
        if self.format is not None and self.format not in FORMATS:
            raise InvalidConfigError("format must be csv or json", format=self.format)
        if self.threads < 1:
            raise InvalidConfigError("threads must be at least 1", threads=self.threads)
        if self.seed_posterior not in ("no-learning", "fully-revealing"):
            raise InvalidConfigError("seed must be no-learning or fully-revealing",
                                     seed=self.seed_posterior)
        if self.experiment == "figure" and self.figure not in FIGURES:
            raise InvalidConfigError("unknown figure id", figure=self.figure, known=sorted(FIGURES))
        self.solver()
        return self

    # ── builders ─────────────────────────────────────────────────────────────

    def pref(self, gamma: float | None = None) -> Preference:
        if self.preference == "cara":
            return Preference.cara(self.alpha)
        return Preference.crra(self.gamma if gamma is None else gamma)

    def market(self, pref: Preference | None = None, tau: float | None = None,
               k: int | None = None) -> MarketConfig:
        return MarketConfig.homogeneous(pref or self.pref(), self.tau if tau is None else tau,
                                        K=k or self.k, wealth=self.wealth, supply=self.supply)

    def signal_grid(self, size: int | None = None) -> SignalGrid:
        return make_grid(size or self.grid, settings.u_max)

    def solver(self) -> SolverConfig:
        return SolverConfig.from_settings(
            damping=self.damping, anderson_memory=self.anderson, max_iter=self.max_iter,
            strict_tol=self.tol, checkpoint_path=self.checkpoint)

    def out_dir(self) -> Path:
        p = Path(self.output) if self.output else settings.output_path()
        return p if p.is_absolute() else settings.project_root / p


@dataclass(frozen=True)
class ExperimentResult:
    frame: pd.DataFrame
    summary: dict[str, Any]
    status: str = "ok"
    default_format: str = "csv"


# ═══════════════════════════════════════════════════════════════════════════════
# HELPERS
# ═══════════════════════════════════════════════════════════════════════════════

def _parallel(fn: Callable[[Any], Any], items: Iterable[Any], threads: int) -> list[Any]:
    """Ordered map over independent jobs."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _worst_status(statuses: Iterable[str]) -> str:
    statuses = set(statuses)
    for s in ("diverged", "fallback"):
        if s in statuses:
            return s
    return "ok"


def _ree_row(sol: REESolution) -> dict[str, Any]:
    rep = sol.regression()
    d = sol.diagnostics
    return {"deficit": rep.deficit, "slope": rep.slope, "r2": rep.r2,
            "residual": d.residual_inf, "status": d.status.value,
            "mono_violations": d.mono_violations, "iterations": sol.iterations}


def _nl_deficit(market: MarketConfig, grid: SignalGrid) -> float:
    return revelation_deficit(no_learning_price_tensor(market, grid), grid, market.taus).deficit


def _nearest_node(grid: SignalGrid, u: float) -> int:
    return int(np.argmin(np.abs(grid.nodes - u)))


def _pref_label(pref: Preference) -> str:
    return "CARA" if pref.is_cara else f"{pref.risk:g}"


# ═══════════════════════════════════════════════════════════════════════════════
# SINGLE RUNS
# ═══════════════════════════════════════════════════════════════════════════════

def exp_no_learning(rc: RunConfig) -> ExperimentResult:
    market, grid = rc.market(), rc.signal_grid()
    price = no_learning_price_tensor(market, grid)
    rep = revelation_deficit(price, grid, market.taus)
    row = {"preference": rc.pref().label(), "tau": rc.tau, "G": rc.grid, "K": rc.k,
           "supply": rc.supply, **rep.as_row(),
           "volume": expected_volume(market, grid, None)}
    return ExperimentResult(pd.DataFrame([row]), row, default_format="json")


def exp_ree(rc: RunConfig) -> ExperimentResult:
    market, grid = rc.market(), rc.signal_grid()
    sol = solve_ree(market, grid, rc.solver(), seed=rc.seed_posterior, resume_from=rc.resume,
                    informed_share=rc.lam)
    row = {"preference": rc.pref().label(), "tau": rc.tau, "G": rc.grid,
           **_ree_row(sol), "no_learning_deficit": _nl_deficit(market, grid)}
    return ExperimentResult(pd.DataFrame([row]), row, status=row["status"], default_format="json")


# ═══════════════════════════════════════════════════════════════════════════════
# TABLES
# ═══════════════════════════════════════════════════════════════════════════════

def exp_table_smooth(rc: RunConfig) -> ExperimentResult:
    """No-learning deficit for every (γ, τ) cell plus the CARA row."""
    grid = rc.signal_grid()
    prefs = [Preference.crra(g) for g in SMOOTH_GAMMAS] + [Preference.cara(1.0)]
    jobs = [(pref, tau) for pref in prefs for tau in SMOOTH_TAUS]

    def cell(job: tuple[Preference, float]) -> float:
        pref, tau = job
        return _nl_deficit(rc.market(pref, tau), grid)

    values = _parallel(cell, jobs, rc.threads)
    rows = []
    for i, pref in enumerate(prefs):
        row: dict[str, Any] = {"gamma": _pref_label(pref)}
        for j, tau in enumerate(SMOOTH_TAUS):
            row[f"tau={tau:g}"] = values[i * len(SMOOTH_TAUS) + j]
        rows.append(row)
    frame = pd.DataFrame(rows)
    lookup = {(_pref_label(p), t): v for (p, t), v in zip(jobs, values)}
    summary = {"G": rc.grid, "cells": len(values),
               "gamma0.5_tau2": lookup[("0.5", 2.0)], "gamma1_tau2": lookup[("1", 2.0)],
               "gamma0.1_tau0.5": lookup[("0.1", 0.5)], "gamma3_tau2": lookup[("3", 2.0)],
               "cara_max": max(v for (lbl, _), v in lookup.items() if lbl == "CARA")}
    return ExperimentResult(frame, summary)


def exp_table_gladder(rc: RunConfig) -> ExperimentResult:
    """REE deficit across lattice sizes at one (γ, τ)."""
    market = rc.market()
    solver = rc.solver()

    def run(G: int) -> dict[str, Any]:
        sol = solve_ree(market, make_grid(G, settings.u_max), solver)
        return {"G": G, **_ree_row(sol)}

    rows = _parallel(run, GRID_LADDER, rc.threads)
    frame = pd.DataFrame(rows)
    by_g = {r["G"]: r["deficit"] for r in rows}
    summary = {"gamma": rc.gamma, "tau": rc.tau,
               "delta_18_20": abs(by_g[18] - by_g[20]) if 18 in by_g and 20 in by_g else None}
    return ExperimentResult(frame, summary, status=_worst_status(r["status"] for r in rows))


def exp_table_posteriors(rc: RunConfig) -> ExperimentResult:
    """Posteriors and price at one signal profile: private, REE, CARA."""
    grid = rc.signal_grid()
    u = np.asarray(rc.u, dtype=float)
    crra = rc.market(Preference.crra(rc.gamma))
    cara = rc.market(Preference.cara(rc.alpha))
    solver = rc.solver()

    private = [float(private_posterior(rc.tau, x)) for x in u]
    nl_price = clear_market(crra, private).price
    ree = posteriors_at(solve_ree(crra, grid, solver), u)
    cara_sol = solve_ree(cara, grid, solver)
    full = posteriors_at(cara_sol, u)

    names = [f"mu{k + 1}" for k in range(len(u))] + ["price"]
    frame = pd.DataFrame({"quantity": names, "no_learning": private + [nl_price],
                          "ree": list(ree), "cara": list(full)})
    summary = {"u": list(u), "gamma": rc.gamma, "tau": rc.tau, "G": rc.grid,
               **{f"ree_{n}": v for n, v in zip(names, ree)},
               **{f"cara_{n}": v for n, v in zip(names, full)}}
    return ExperimentResult(frame, summary)


def exp_table_mechanisms(rc: RunConfig) -> ExperimentResult:
    """No-learning deficits of every mechanism row; REE for CARA (or all with --with-ree)."""
    grid = rc.signal_grid()
    solver = rc.solver()

    def run(cfg) -> dict[str, Any]:
        nl = run_mechanism(cfg, grid).deficit
        ree = None
        if rc.with_ree or cfg.kind == "cara":
            ree = run_mechanism(cfg.with_learning("ree"), grid, solver=solver).deficit
        return {"mechanism": cfg.label, "preference": cfg.kind,
                "risk": "/".join(f"{r:g}" for r in cfg.risks),
                "tau": "/".join(f"{t:g}" for t in cfg.taus),
                "no_learning": nl, "ree": ree}

    rows = _parallel(run, BASELINE, rc.threads)
    frame = pd.DataFrame(rows)
    crra = {r["mechanism"]: r["no_learning"] for r in rows if r["preference"] == "crra"}
    verdict = ordering_check(crra)
    summary = {"G": rc.grid, "ordering_holds": verdict.holds,
               "ordering_failures": verdict.failures(), "chain": list(ORDERING),
               **{r["mechanism"]: r["no_learning"] for r in rows}}
    cara_row = next(r for r in rows if r["preference"] == "cara")
    summary["het_alpha_cara_ree"] = cara_row["ree"]
    return ExperimentResult(frame, summary)


def exp_table_ree_gamma(rc: RunConfig) -> ExperimentResult:
    """No-learning versus REE deficit along the γ ladder."""
    grid = rc.signal_grid()
    solver = rc.solver()

    def run(gamma: float) -> dict[str, Any]:
        market = rc.market(Preference.crra(gamma))
        sol = solve_ree(market, grid, solver)
        return {"gamma": gamma, "no_learning": _nl_deficit(market, grid), **_ree_row(sol)}

    rows = _parallel(run, REE_GAMMAS, rc.threads)
    frame = pd.DataFrame(rows)
    deficits = [r["deficit"] for r in rows]
    summary = {"tau": rc.tau, "G": rc.grid,
               "decreasing_in_gamma": bool(all(a > b for a, b in zip(deficits, deficits[1:]))),
               "ree_above_no_learning": bool(all(r["deficit"] >= r["no_learning"] for r in rows))}
    return ExperimentResult(frame, summary, status=_worst_status(r["status"] for r in rows))


# ═══════════════════════════════════════════════════════════════════════════════
# SERIES
# ═══════════════════════════════════════════════════════════════════════════════

def exp_volume(rc: RunConfig) -> ExperimentResult:
    """Expected no-learning volume along the γ ladder (REE volume with --with-ree)."""
    grid = rc.signal_grid()
    solver = rc.solver()

    def run(pref: Preference) -> dict[str, Any]:
        market = rc.market(pref)
        row = {"gamma": _pref_label(pref), "no_learning": expected_volume(market, grid, None)}
        if rc.with_ree:
            sol = solve_ree(market, grid, solver)
            row["ree"] = expected_volume(market, grid, None, sol.beliefs())
        return row

    prefs = [Preference.crra(g) for g in VOLUME_GAMMAS] + [Preference.cara(rc.alpha)]
    rows = _parallel(run, prefs, rc.threads)
    return ExperimentResult(pd.DataFrame(rows), {"tau": rc.tau, "G": rc.grid, "rows": len(rows)})


def exp_value_info(rc: RunConfig) -> ExperimentResult:
    """V against signal precision and against the informed share."""
    grid = rc.signal_grid()
    crra = rc.market(Preference.crra(rc.gamma))
    cara = rc.market(Preference.cara(rc.alpha))
    rows = []
    for tau in VALUE_TAUS:
        rows.append({"series": f"crra gamma={rc.gamma:g} vs tau", "x": tau,
                     "y": value_of_information(with_precision(crra, tau), grid).v_info})
        rows.append({"series": "cara fully-revealing vs tau", "x": tau,
                     "y": value_of_information(with_precision(cara, tau), grid,
                                               "fully-revealing").v_info})
    for lam, v in value_ladder(crra, grid):
        rows.append({"series": f"crra gamma={rc.gamma:g} vs lambda", "x": lam, "y": v})
    for lam, v in value_ladder(cara, grid):
        rows.append({"series": "cara vs lambda", "x": lam, "y": v})
    frame = pd.DataFrame(rows)

    v_small = [r["y"] for r in rows if r["series"].startswith("crra") and r["series"].endswith("tau")]
    summary = {"gamma": rc.gamma, "tau": rc.tau, "G": rc.grid,
               "crra_v": value_of_information(crra, grid).v_info,
               "cara_v": value_of_information(cara, grid, "fully-revealing").v_info,
               "slope_near_zero": (v_small[1] - v_small[0]) / (VALUE_TAUS[1] - VALUE_TAUS[0])}
    return ExperimentResult(frame, summary)


def exp_gs(rc: RunConfig) -> ExperimentResult:
    """Acquisition equilibrium over a cost ladder spanning (V(1), V(0))."""
    grid = rc.signal_grid()
    market = rc.market()
    ladder = value_ladder(market, grid)
    v0, v1 = ladder[0][1], ladder[-1][1]
    costs = [rc.cost] if rc.cost is not None else (
        list(np.linspace(v1, v0, 7)[1:-1]) if v0 > v1 else [max(v0, 1e-6)])
    results = [gs_equilibrium(market, grid, None, float(c), ladder=ladder) for c in costs]
    frame = pd.DataFrame([r.as_row() for r in results])
    summary = {"tau": rc.tau, "G": rc.grid, "v_at_0": v0, "c_bar": v1,
               "monotone": results[0].monotone,
               "lambda_weakly_decreasing": bool(all(
                   a.lam >= b.lam for a, b in zip(results, results[1:]))),
               "boundaries": [r.boundary.value for r in results]}
    return ExperimentResult(frame, summary)


def exp_curvature(rc: RunConfig) -> ExperimentResult:
    """Curvature sign of the REE price's level sets across a level ladder."""
    grid = rc.signal_grid()
    sol = solve_ree(rc.market(), grid, rc.solver())
    own = _nearest_node(grid, rc.u[0])
    report = contour_curvature_report(sol.price, grid, own, CURVATURE_LEVELS)
    frame = pd.DataFrame(report.as_rows())
    summary = {"own_index": own, "own_u": float(grid.nodes[own]),
               "critical_level": report.critical_level,
               "signs": [lc.sign for lc in report.levels],
               "solver_status": sol.diagnostics.status.value}
    return ExperimentResult(frame, summary)


def exp_jensen(rc: RunConfig) -> ExperimentResult:
    u = (1.0, 0.0, 0.0) if rc.k == 3 else (1.0,) + (0.0,) * (rc.k - 1)
    rows = jensen_series(JENSEN_TAUS, u)
    rem = {r["tau"]: r["remainder"] for r in rows}
    summary = {"u": list(u), "remainder_ratio": rem[0.02] / rem[0.01]}
    return ExperimentResult(pd.DataFrame(rows), summary)


def exp_robustness_k(rc: RunConfig) -> ExperimentResult:
    """No-learning deficit by group count; the lattice shrinks as K grows."""
    rows = []
    for K in ROBUSTNESS_KS:
        G = min(rc.grid, int(MAX_LATTICE_CELLS ** (1.0 / K)))
        grid = rc.signal_grid(G)
        for pref in (Preference.crra(rc.gamma), Preference.cara(rc.alpha)):
            market = rc.market(pref, k=K)
            rows.append({"K": K, "G": G, "preference": pref.label(),
                         "deficit": _nl_deficit(market, grid)})
    return ExperimentResult(pd.DataFrame(rows), {"tau": rc.tau, "ks": list(ROBUSTNESS_KS)})


def contour_series(rc: RunConfig, levels: Sequence[float] = CONTOUR_LEVELS) -> pd.DataFrame:
    """Traced level-set points of the no-learning slice, CRRA and CARA."""
    grid = rc.signal_grid()
    own = _nearest_node(grid, rc.u[0])
    rows = []
    for pref in (Preference.crra(rc.gamma), Preference.cara(rc.alpha)):
        price = no_learning_price_tensor(rc.market(pref), grid)
        slice_ = own_slices(price.log_odds, 0)[own]
        for level in levels:
            trace = trace_contour(slice_, float(np.log(level / (1 - level))), grid, own,
                                  log_odds=True)
            pts = trace.points(axis=0)
            for a, b in pts[np.argsort(pts[:, 0])]:
                rows.append({"series": f"{pref.label()} p={level:g}", "level": level,
                             "x": float(a), "y": float(b)})
    return pd.DataFrame(rows, columns=["series", "level", "x", "y"])


def exp_contours(rc: RunConfig) -> ExperimentResult:
    frame = contour_series(rc)
    return ExperimentResult(frame, {"points": len(frame), "levels": list(CONTOUR_LEVELS)})


def price_map_series(rc: RunConfig) -> pd.DataFrame:
    """logit price against T⋆: no-learning, REE and fully revealing."""
    market, grid = rc.market(), rc.signal_grid()
    T = lattice_statistic(grid, market.taus).ravel()
    sources = {
        "no-learning": no_learning_price_tensor(market, grid).log_odds,
        "ree": solve_ree(market, grid, rc.solver()).price.log_odds,
        "fully-revealing": fully_revealing_price(market, grid).log_odds,
    }
    frames = [pd.DataFrame({"series": name, "x": T, "y": lP.ravel()})
              for name, lP in sources.items()]
    return pd.concat(frames, ignore_index=True)


def exp_price_map(rc: RunConfig) -> ExperimentResult:
    frame = price_map_series(rc)
    return ExperimentResult(frame, {"cells": int(len(frame) // 3)})


# ═══════════════════════════════════════════════════════════════════════════════
# FIGURE SERIES  (x, y, series)
# ═══════════════════════════════════════════════════════════════════════════════

def _xy(frame: pd.DataFrame, x: str, y: str, series: str | Callable[[pd.Series], str]) -> pd.DataFrame:
    labels = frame.apply(series, axis=1) if callable(series) else series
    return pd.DataFrame({"x": frame[x], "y": frame[y], "series": labels})


def fig_knife_edge(rc: RunConfig) -> pd.DataFrame:
    grid = rc.signal_grid()
    rows = []
    for pref in [Preference.crra(g) for g in KNIFE_EDGE_GAMMAS] + [Preference.cara(rc.alpha)]:
        for tau in KNIFE_EDGE_TAUS:
            rows.append({"x": tau, "y": _nl_deficit(rc.market(pref, tau), grid),
                         "series": pref.label()})
    return pd.DataFrame(rows)


def fig_ree_panels(rc: RunConfig) -> pd.DataFrame:
    grid = rc.signal_grid()
    solver = rc.solver()
    rows = []
    for tau in PANEL_TAUS:
        market = rc.market(Preference.crra(rc.gamma), tau)
        rows.append({"x": tau, "y": _nl_deficit(market, grid), "series": "tau/no-learning"})
        rows.append({"x": tau, "y": solve_ree(market, grid, solver).regression().deficit,
                     "series": "tau/ree"})
    for gamma in REE_GAMMAS:
        market = rc.market(Preference.crra(gamma))
        rows.append({"x": gamma, "y": _nl_deficit(market, grid), "series": "gamma/no-learning"})
        rows.append({"x": gamma, "y": solve_ree(market, grid, solver).regression().deficit,
                     "series": "gamma/ree"})
    return pd.DataFrame(rows)


def fig_convergence(rc: RunConfig) -> pd.DataFrame:
    sol = solve_ree(rc.market(), rc.signal_grid(), rc.solver())
    return pd.DataFrame([{"x": i, "y": r, "series": phase} for i, phase, r in sol.history])


def _from_experiment(exp: Callable[[RunConfig], ExperimentResult], x: str, y: str,
                     series) -> Callable[[RunConfig], pd.DataFrame]:
    return lambda rc: _xy(exp(rc).frame, x, y, series)


def _volume_xy(rc: RunConfig) -> pd.DataFrame:
    frame = exp_volume(rc).frame
    parts = [_xy(frame, "gamma", "no_learning", "no-learning")]
    if "ree" in frame:
        parts.append(_xy(frame, "gamma", "ree", "ree"))
    return pd.concat(parts, ignore_index=True)


def _mechanisms_xy(rc: RunConfig) -> pd.DataFrame:
    frame = exp_table_mechanisms(rc).frame
    parts = [_xy(frame, "mechanism", "no_learning", "no-learning"),
             _xy(frame.dropna(subset=["ree"]), "mechanism", "ree", "ree")]
    return pd.concat(parts, ignore_index=True)


FIGURES: dict[str, Callable[[RunConfig], pd.DataFrame]] = {
    "knife-edge": fig_knife_edge,
    "ree-panels": fig_ree_panels,
    "volume": _volume_xy,
    "value-info": lambda rc: exp_value_info(rc).frame[["x", "y", "series"]],
    "gs": _from_experiment(exp_gs, "cost", "lambda", "lambda*"),
    "mechanisms": _mechanisms_xy,
    "convergence": fig_convergence,
    "robustness-k": _from_experiment(exp_robustness_k, "K", "deficit", lambda r: r["preference"]),
    "contours": lambda rc: contour_series(rc)[["x", "y", "series"]],
    "price-map": lambda rc: price_map_series(rc)[["x", "y", "series"]],
}


def emit_figure_series(figure_id: str, rc: RunConfig) -> pd.DataFrame:
    if figure_id not in FIGURES:
        raise InvalidConfigError("unknown figure id", figure=figure_id, known=sorted(FIGURES))
    return FIGURES[figure_id](rc).reset_index(drop=True)


def exp_figure(rc: RunConfig) -> ExperimentResult:
    frame = emit_figure_series(rc.figure, rc)
    summary = {"figure": rc.figure, "points": len(frame),
               "series": sorted(str(s) for s in frame["series"].unique())}
    return ExperimentResult(frame, summary)


EXPERIMENTS: dict[str, Callable[[RunConfig], ExperimentResult]] = {
    "no-learning": exp_no_learning,
    "ree": exp_ree,
    "table-smooth": exp_table_smooth,
    "table-gladder": exp_table_gladder,
    "table-posteriors": exp_table_posteriors,
    "table-mechanisms": exp_table_mechanisms,
    "table-ree-gamma": exp_table_ree_gamma,
    "volume": exp_volume,
    "value-info": exp_value_info,
    "gs": exp_gs,
    "curvature": exp_curvature,
    "jensen": exp_jensen,
    "robustness-k": exp_robustness_k,
    "contours": exp_contours,
    "price-map": exp_price_map,
    "figure": exp_figure,
}


# ═══════════════════════════════════════════════════════════════════════════════
# OUTPUT
# ═══════════════════════════════════════════════════════════════════════════════

def _round(value: Any, column: str) -> Any:
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (bool, np.bool_)) or not isinstance(value, (float, np.floating)):
        return value
    if not np.isfinite(value):
        return None
    return float(f"{value:.3e}") if column in RESIDUAL_COLUMNS else float(f"{value:.6g}")


def write_table(frame: pd.DataFrame, path: Path, fmt: str,
                summary: dict[str, Any] | None = None) -> Path:
    """
    CSV: 6 significant digits, residual-type columns in scientific notation.
    JSON: the same rounding, rows plus the summary.
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        out = frame.copy()
        for col in out.columns:
            if col in RESIDUAL_COLUMNS:
                out[col] = [f"{v:.3e}" if isinstance(v, (float, np.floating)) else v
                            for v in out[col]]
        out.to_csv(path, index=False, float_format="%.6g", lineterminator="\n")
    else:
        rows = [{k: _round(v, k) for k, v in rec.items()} for rec in frame.to_dict("records")]
        data = {"rows": rows, "summary": {k: _round(v, k) for k, v in (summary or {}).items()}}
        path.write_text(json.dumps(data, indent=2, default=str) + "\n", encoding="utf-8")
    return path


def _artifact_name(rc: RunConfig) -> str:
    return f"figure_{rc.figure}" if rc.experiment == "figure" else rc.experiment


def _save_run_summary(rc: RunConfig, summary: dict[str, Any]) -> Path:
    """Save a JSON snapshot of this run to <out>/runs/."""
    run_dir = rc.out_dir() / "runs"
    run_dir.mkdir(parents=True, exist_ok=True)
    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    filepath = run_dir / f"run_{_artifact_name(rc)}_{timestamp}.json"
    data = {"config": asdict(rc), "summary": summary}
    filepath.write_text(json.dumps(data, indent=2, default=str), encoding="utf-8")
    log.info("Run snapshot saved to: %s", filepath)
    return filepath


# ═══════════════════════════════════════════════════════════════════════════════
# MAIN PIPELINE
# ═══════════════════════════════════════════════════════════════════════════════

def run_experiment(rc: RunConfig) -> ExperimentResult:
    start = time.time()
    log.info("=" * 70)
    log.info("EXPERIMENT: %s", _artifact_name(rc).upper())
    log.info("=" * 70)

    log.info("STEP 1/4 -- Validating configuration...")
    rc.validate()
    log.info("  -> preference=%s gamma=%g alpha=%g tau=%g G=%d K=%d threads=%d",
             rc.preference, rc.gamma, rc.alpha, rc.tau, rc.grid, rc.k, rc.threads)

    log.info("STEP 2/4 -- Computing...")
    result = EXPERIMENTS[rc.experiment](rc)
    log.info("  -> %d rows, status %s", len(result.frame), result.status)

    log.info("STEP 3/4 -- Writing artifact...")
    fmt = rc.format or result.default_format
    path = write_table(result.frame, rc.out_dir() / f"{_artifact_name(rc)}.{fmt}", fmt,
                       result.summary)
    log.info("  -> %s", path)

    elapsed = round(time.time() - start, 1)
    log.info("STEP 4/4 -- Saving run snapshot...")
    summary = {**result.summary, "artifact": str(path), "status": result.status,
               "elapsed_seconds": elapsed}
    _save_run_summary(rc, summary)

    log.info("=" * 70)
    log.info("EXPERIMENT %s COMPLETE | status: %s | Time: %ss",
             _artifact_name(rc).upper(), result.status, elapsed)
    log.info("=" * 70)
    return replace(result, summary=summary)
