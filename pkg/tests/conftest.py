from __future__ import annotations

import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from revlab.clearing import MarketConfig  # noqa: E402
from revlab.grid import SignalGrid, make_grid  # noqa: E402
from revlab.preferences import Preference  # noqa: E402


@pytest.fixture
def grid9() -> SignalGrid:
    """Nodes −4, −3, …, 4: unit spacing, 0 and ±1 on the lattice."""
    return make_grid(9, 4.0)


@pytest.fixture
def cara_market() -> MarketConfig:
    return MarketConfig.homogeneous(Preference.cara(1.0), 2.0)


@pytest.fixture
def crra_market() -> MarketConfig:
    return MarketConfig.homogeneous(Preference.crra(0.5), 2.0)
