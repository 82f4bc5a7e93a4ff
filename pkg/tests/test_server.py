from __future__ import annotations

from pathlib import Path

import pytest

from server import app


@pytest.fixture
def client():
    app.config["TESTING"] = True
    with app.test_client() as c:
        yield c


def test_health(client) -> None:
    resp = client.get("/")
    assert resp.status_code == 200
    body = resp.get_json()
    assert body["status"] == "ok"
    assert "ree" in body["experiments"]


def test_unknown_experiment_is_a_bad_request(client) -> None:
    assert client.post("/run/teleport", json={}).status_code == 400


def test_invalid_parameters_are_a_bad_request(client) -> None:
    assert client.post("/run/no-learning", json={"grid": 2}).status_code == 400
    assert client.post("/run/no-learning", json={"temperature": 1}).status_code == 400
    assert client.post("/run/no-learning", json=[1, 2]).status_code == 400


def test_run_returns_the_summary(client, tmp_path: Path) -> None:
    resp = client.post("/run/no-learning", json={"grid": 5, "output": str(tmp_path)})
    assert resp.status_code == 200
    body = resp.get_json()
    assert body["status"] == "ok"
    assert body["summary"]["artifact"].endswith("no-learning.json")
    assert (tmp_path / "no-learning.json").exists()
