"""
shared/logger.py — Structured logging for revlab.

Usage:
    from shared.logger import get_logger
    log = get_logger("revlab.ree")
    log.info("Picard phase: residual %.3e", res)

Per-logger levels come from REVLAB_LOG_LEVELS ("revlab.ree=DEBUG,...");
REVLAB_LOG_FILE=false keeps output on the console only.
"""

import logging
import sys

_CONFIGURED = False

# third-party loggers that flood INFO
_QUIET = ("werkzeug", "matplotlib")


def _parse_levels(spec: str) -> dict[str, int]:
    levels = {}
    for item in filter(None, (s.strip() for s in spec.split(","))):
        name, _, value = item.partition("=")
        level = logging.getLevelName(value.strip().upper())
        if name.strip() and isinstance(level, int):
            levels[name.strip()] = level
    return levels


def _configure_root() -> None:
    """One-time root logger setup: console, optional file, per-logger levels."""
    global _CONFIGURED
    if _CONFIGURED:
        return
    _CONFIGURED = True

    from shared.config import settings  # deferred to avoid circular import

    level = getattr(logging, settings.log_level.upper(), logging.INFO)
    fmt = logging.Formatter(
        fmt="%(asctime)s | %(levelname)-7s | %(name)-20s | %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )

    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stdout)]
    if settings.log_file:
        log_dir = settings.project_root / "logs"
        log_dir.mkdir(exist_ok=True)
        handlers.append(logging.FileHandler(log_dir / "revlab.log", encoding="utf-8"))

    root = logging.getLogger()
    root.setLevel(level)
    for handler in handlers:
        handler.setFormatter(fmt)
        root.addHandler(handler)

    for name in _QUIET:
        logging.getLogger(name).setLevel(max(level, logging.WARNING))
    for name, lvl in _parse_levels(settings.log_levels).items():
        logging.getLogger(name).setLevel(lvl)


def get_logger(name: str) -> logging.Logger:
    """Return a named logger. Configures root logger on first call."""
    _configure_root()
    return logging.getLogger(name)
