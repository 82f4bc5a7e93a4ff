"""
server.py — HTTP entry point for the revlab experiment harness.

Runs one experiment per request.  The JSON body carries the same keys as a
--config file (gamma, tau, grid, ...).

    POST /run/table-smooth       {"grid": 20, "threads": 4}
    POST /run/figure             {"figure": "knife-edge"}

Health check: GET /
"""

from __future__ import annotations

import sys
import traceback
from pathlib import Path

from flask import Flask, jsonify, request

# Ensure project root is on path
PROJECT_ROOT = Path(__file__).resolve().parent
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from revlab.experiments import EXPERIMENTS, RunConfig, run_experiment
from shared.config import settings
from shared.logger import get_logger

log = get_logger("server")

app = Flask(__name__)


# ── Health check ─────────────────────────────────────────────────────────────

@app.route("/", methods=["GET"])
def health():
    return jsonify({
        "status": "ok",
        "service": "revlab",
        "experiments": sorted(EXPERIMENTS),
        "grid_size": settings.grid_size,
    })


# ── Experiment runner ────────────────────────────────────────────────────────

def _run(experiment: str, params: dict) -> dict:
    """Build and validate the run, execute it, return its summary."""
    if experiment not in EXPERIMENTS:
        raise ValueError(f"Unknown experiment: {experiment}")
    rc = RunConfig.from_mapping({**params, "experiment": experiment}).validate()
    log.info("Running experiment: %s", experiment)
    result = run_experiment(rc)
    return {"experiment": experiment, "status": result.status, "summary": result.summary}


@app.route("/run/<experiment>", methods=["POST"])
def run_experiment_route(experiment: str):
    log.info("=== Received trigger for %s ===", experiment)
    params = request.get_json(silent=True) or {}
    if not isinstance(params, dict):
        return jsonify({"error": "request body must be a JSON object"}), 400

    try:
        result = _run(experiment, params)
        log.info("=== %s finished (%s) ===", experiment, result["status"])
        code = 500 if result["status"] == "diverged" else 200
        return jsonify(result), code

    except (ValueError, TypeError) as exc:
        log.error("Bad request: %s", exc)
        return jsonify({"error": str(exc)}), 400

    except Exception as exc:
        log.error("Experiment %s failed: %s", experiment, exc)
        log.error(traceback.format_exc())
        return jsonify({
            "error": f"Experiment {experiment} failed",
            "detail": str(exc),
        }), 500


# ── Run locally for testing ─────────────────────────────────────────────────

if __name__ == "__main__":
    import os
    port = int(os.environ.get("PORT", 8080))
    log.info("Starting revlab server on port %d", port)
    app.run(host="0.0.0.0", port=port, debug=False)
