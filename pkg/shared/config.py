"""
shared/config.py — Central configuration loader for revlab.

Reads settings from the project-root .env file and exposes them as a
typed Settings dataclass.  Every module does:

    from shared.config import settings
"""

import os
from dataclasses import dataclass, field
from pathlib import Path

from dotenv import load_dotenv

# ── Locate .env relative to project root ─────────────────────────────────────
PROJECT_ROOT = Path(__file__).resolve().parent.parent
_env_path = PROJECT_ROOT / ".env"

if _env_path.exists():
    load_dotenv(_env_path)
else:
    _example = PROJECT_ROOT / ".env.example"
    if _example.exists():
        load_dotenv(_example)


def _env(key: str, default: str = "") -> str:
    """Read an env var, stripping whitespace."""
    return os.getenv(key, default).strip()


def _env_int(key: str, default: int = 0) -> int:
    val = _env(key, str(default))
    try:
        return int(val)
    except ValueError:
        return default


def _env_float(key: str, default: float = 0.0) -> float:
    val = _env(key, repr(default))
    try:
        return float(val)
    except ValueError:
        return default


def _env_bool(key: str, default: bool = False) -> bool:
    return _env(key, str(default)).lower() in ("true", "1", "yes")


# ── Settings dataclass ───────────────────────────────────────────────────────

@dataclass(frozen=True)
class Settings:
    """Immutable lab-wide settings loaded from .env."""

    # Output
    out_dir: str = field(default_factory=lambda: _env("REVLAB_OUT_DIR", "output"))
    threads: int = field(default_factory=lambda: _env_int("REVLAB_THREADS", 1))

    # Lattice
    grid_size: int = field(default_factory=lambda: _env_int("REVLAB_GRID_SIZE", 20))
    u_max: float = field(default_factory=lambda: _env_float("REVLAB_U_MAX", 4.0))

    # Fixed-point solver
    damping: float = field(default_factory=lambda: _env_float("REVLAB_DAMPING", 0.25))
    anderson_memory: int = field(default_factory=lambda: _env_int("REVLAB_ANDERSON", 6))
    max_iter: int = field(default_factory=lambda: _env_int("REVLAB_MAX_ITER", 400))
    picard_tol: float = field(default_factory=lambda: _env_float("REVLAB_PICARD_TOL", 1e-4))
    strict_tol: float = field(default_factory=lambda: _env_float("REVLAB_STRICT_TOL", 1e-12))
    clear_tol: float = field(default_factory=lambda: _env_float("REVLAB_CLEAR_TOL", 1e-12))
    checkpoint_every: int = field(default_factory=lambda: _env_int("REVLAB_CHECKPOINT_EVERY", 0))

    # General
    log_level: str = field(default_factory=lambda: _env("LOG_LEVEL", "INFO"))
    log_file: bool = field(default_factory=lambda: _env_bool("REVLAB_LOG_FILE", True))
    # e.g. "revlab.ree=DEBUG,revlab.clearing=WARNING"
    log_levels: str = field(default_factory=lambda: _env("REVLAB_LOG_LEVELS", ""))

    # Computed paths
    project_root: Path = field(default_factory=lambda: PROJECT_ROOT)

    def output_path(self) -> Path:
        """Resolve the output directory relative to project root."""
        p = Path(self.out_dir)
        if p.is_absolute():
            return p
        return self.project_root / p


# ── Singleton instance ───────────────────────────────────────────────────────
settings = Settings()
