"""
revlab shared module — configuration and logging used by every package.
"""

from shared.config import settings
from shared.logger import get_logger

__all__ = [
    "settings",
    "get_logger",
]
