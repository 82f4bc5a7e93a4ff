"""
revlab/errors.py — Typed failures raised by the library.

Callers at the edges (CLI, HTTP server, experiment pipelines) log these and
map them to exit codes / status codes; library code never swallows them.
"""

from __future__ import annotations

from typing import Any


class RevlabError(Exception):
    """Base class for every error raised by revlab."""

    def __init__(self, message: str, **context: Any) -> None:
        super().__init__(message)
        self.context = context

    def __str__(self) -> str:
        base = super().__str__()
        if not self.context:
            return base
        extras = ", ".join(f"{k}={v!r}" for k, v in sorted(self.context.items()))
        return f"{base} ({extras})"


class InvalidConfigError(RevlabError, ValueError):
    """A configuration value is out of range or inconsistent."""


class InvalidInputError(RevlabError, ValueError):
    """Arguments to an operation are malformed (e.g. length mismatch)."""


class NoEquilibriumError(RevlabError):
    """The aggregate excess demand has no root in the admissible price range."""


class DegenerateRegressionError(RevlabError):
    """A regression variable has zero weighted variance."""


class AbortedIterationError(RevlabError):
    """Too many lattice cells failed to clear inside one map application."""
