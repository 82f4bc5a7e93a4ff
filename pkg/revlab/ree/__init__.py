"""Contour-integration rational-expectations equilibrium."""

from revlab.ree.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from revlab.ree.contour import ContourTrace, contour_posterior, slice_evidence, trace_contour
from revlab.ree.projection import PosteriorTable, price_grid, project_monotone
from revlab.ree.solver import (
    ContourMap,
    CurvatureReport,
    MapResult,
    PricePosterior,
    REESolution,
    SolverConfig,
    apply_map,
    contour_curvature_report,
    fully_revealing_price,
    posteriors_at,
    price_nodes_for,
    price_posterior,
    private_tables,
    solve_fully_revealing,
    solve_ree,
    symmetrise,
)

__all__ = [
    "Checkpoint", "ContourMap", "ContourTrace", "CurvatureReport", "MapResult",
    "PosteriorTable", "PricePosterior", "REESolution", "SolverConfig",
    "apply_map", "contour_curvature_report", "contour_posterior", "fully_revealing_price",
    "load_checkpoint", "posteriors_at", "price_grid", "price_nodes_for", "price_posterior",
    "private_tables",
    "project_monotone", "save_checkpoint", "slice_evidence", "solve_fully_revealing",
    "solve_ree", "symmetrise", "trace_contour",
]
