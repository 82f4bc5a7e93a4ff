"""
revlab/cli.py — Command-line entry point for the experiment harness.

Usage:
    python -m revlab no-learning --gamma 0.5 --tau 2 --grid 20
    python -m revlab ree --gamma 0.5 --tau 2 --grid 20 --format json
    python -m revlab table-smooth --grid 20 --threads 4
    python -m revlab figure knife-edge --output figures/
    python -m revlab gs --config runs/gs.json --cost 0.01

Exit codes: 0 success (strict or fallback), 1 solver diverged, 2 bad usage.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Sequence

from revlab.errors import InvalidConfigError, RevlabError
from revlab.experiments import EXPERIMENTS, FIGURES, FORMATS, RunConfig, run_experiment
from shared.logger import get_logger

log = get_logger("revlab.cli")

EXIT_OK = 0
EXIT_DIVERGED = 1
EXIT_USAGE = 2

# flag name -> RunConfig field
_FLAG_FIELDS = {
    "gamma": "gamma", "alpha": "alpha", "tau": "tau", "grid": "grid", "k": "k",
    "wealth": "wealth", "supply": "supply", "damping": "damping", "anderson": "anderson",
    "max_iter": "max_iter", "tol": "tol", "lam": "lam", "cost": "cost",
    "seed_posterior": "seed_posterior", "output": "output", "format": "format",
    "threads": "threads", "u": "u", "resume": "resume", "checkpoint": "checkpoint",
    "preference": "preference", "with_ree": "with_ree",
}


def _signals(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="revlab",
        description="Partial revelation of information through prices: experiments",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python -m revlab no-learning --gamma 0.5 --tau 2 --grid 20
  python -m revlab ree --gamma 1 --tau 2 --anderson 6 --format json
  python -m revlab table-smooth --threads 4
  python -m revlab figure value-info --output figures/
  python -m revlab gs --alpha 1 --cost 0.01
        """,
    )
    parser.add_argument("experiment", choices=sorted(EXPERIMENTS), help="Experiment id")
    parser.add_argument("figure", nargs="?", default=None,
                        help=f"Figure id for 'figure' ({', '.join(sorted(FIGURES))})")

    econ = parser.add_argument_group("economy")
    econ.add_argument("--gamma", type=float, help="CRRA relative risk aversion")
    econ.add_argument("--alpha", type=float, help="CARA absolute risk aversion (selects CARA)")
    econ.add_argument("--preference", choices=("crra", "cara"))
    econ.add_argument("--tau", type=float, help="Signal precision")
    econ.add_argument("--grid", type=int, help="Signal lattice size G")
    econ.add_argument("--k", type=int, help="Number of agent groups")
    econ.add_argument("--wealth", type=float)
    econ.add_argument("--supply", type=float, help="Deterministic asset supply")
    econ.add_argument("--lambda", dest="lam", type=float, help="Informed share")
    econ.add_argument("--cost", type=float, help="Signal acquisition cost")
    econ.add_argument("--u", type=_signals, help="Signal profile, e.g. 1,-1,1")

    solver = parser.add_argument_group("solver")
    solver.add_argument("--damping", type=float)
    solver.add_argument("--anderson", type=int, help="Anderson memory (0 = damped Picard)")
    solver.add_argument("--max-iter", type=int)
    solver.add_argument("--tol", type=float, help="Strict posterior tolerance")
    solver.add_argument("--seed-posterior", choices=("no-learning", "fully-revealing"))
    solver.add_argument("--checkpoint", help="Write solver checkpoints to this .npz path")
    solver.add_argument("--resume", help="Resume the solver from a checkpoint")
    solver.add_argument("--with-ree", action="store_true", default=None,
                        help="Add REE columns to tables that default to no-learning")

    out = parser.add_argument_group("output")
    out.add_argument("--output", help="Output directory (default REVLAB_OUT_DIR)")
    out.add_argument("--format", choices=FORMATS)
    out.add_argument("--threads", type=int)
    out.add_argument("--config", help="JSON file of settings; flags override it")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """JSON config file first, then explicit flags on top."""
    base: dict[str, Any] = {}
    if args.config:
        path = Path(args.config)
        try:
            base = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidConfigError("cannot read config file", path=str(path), reason=str(exc))
        if not isinstance(base, dict):
            raise InvalidConfigError("config file must hold a JSON object", path=str(path))
    base["experiment"] = args.experiment
    if args.figure is not None:
        base["figure"] = args.figure

    rc = RunConfig.from_mapping(base)
    overrides = {fld: getattr(args, flag) for flag, fld in _FLAG_FIELDS.items()}
    if args.alpha is not None and args.preference is None:
        overrides["preference"] = "cara"
    return rc.merged(overrides)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK

    try:
        rc = config_from_args(args).validate()
    except (InvalidConfigError, TypeError) as exc:
        log.error("Invalid configuration: %s", exc)
        return EXIT_USAGE

    try:
        result = run_experiment(rc)
    except InvalidConfigError as exc:
        log.error("Invalid configuration: %s", exc)
        return EXIT_USAGE
    except RevlabError as exc:
        log.error("Experiment %s failed: %s", rc.experiment, exc)
        return EXIT_DIVERGED

    if result.status == "diverged":
        log.error("Solver diverged; best iterate written to %s", result.summary["artifact"])
        return EXIT_DIVERGED
    print(f"\n[OK] {rc.experiment} complete: {result.summary['artifact']}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
