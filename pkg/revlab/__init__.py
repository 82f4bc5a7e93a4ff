"""
revlab — partial revelation of private information through asset prices.

Three agent groups trade a binary asset on a signal lattice; the package
clears the market, solves the rational-expectations fixed point by contour
integration, and measures how much of the pooled signal the price reveals.
"""

from revlab.clearing import MarketConfig, PriceTensor, clear_market, no_learning_price_tensor
from revlab.grid import SignalGrid, make_grid
from revlab.metrics import revelation_deficit
from revlab.preferences import AgentGroup, Preference
from revlab.ree import REESolution, SolverConfig, solve_ree

__all__ = [
    "AgentGroup", "MarketConfig", "Preference", "PriceTensor", "REESolution", "SignalGrid",
    "SolverConfig", "clear_market", "make_grid", "no_learning_price_tensor",
    "revelation_deficit", "solve_ree",
]
