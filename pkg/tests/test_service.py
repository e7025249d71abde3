"""HTTP service endpoints: happy paths, input errors, JSON sanitation."""

import math

import pytest
from fastapi.testclient import TestClient

from densbound.bounds import make_constants
from densbound.service import _jsonable, app


@pytest.fixture(scope="module")
def client():
    with TestClient(app, base_url="http://densbound") as c:
        yield c


def test_health(client):
    resp = client.get("/health")
    assert resp.status_code == 200
    assert resp.json()["status"] == "ok"


def test_constants_endpoint(client):
    resp = client.post("/constants", json={"q": 1})
    assert resp.status_code == 200
    body = resp.json()["constants"]
    assert body["p_q"] == make_constants(1).p_q
    assert body["log_C_q"] == pytest.approx(make_constants(1).log_C_q)


def test_constants_bad_override(client):
    resp = client.post(
        "/constants", json={"q": 1, "overrides": {"no_such_constant": 2.0}}
    )
    assert resp.status_code == 422


def test_grid_endpoint(client):
    resp = client.post(
        "/grid",
        json={
            "pi": {"ts": [0.0, 1.0], "vals": [1.0, 1.0]},
            "gamma": {"ts": [0.0, 1.0], "vals": [0.0, 0.0]},
            "h": 1.0, "m_Q": 1.0, "m_pi": 1.0, "T": 1.0,
        },
    )
    assert resp.status_code == 200
    body = resp.json()
    assert body["N"] == 1
    assert body["times"] == [0.0, 1.0]
    assert body["count_bound"] == pytest.approx(2.0)


def test_grid_rejects_zero_pi(client):
    resp = client.post(
        "/grid",
        json={
            "pi": {"ts": [0.0, 1.0], "vals": [0.0, 1.0]},
            "gamma": {"ts": [0.0, 1.0], "vals": [0.0, 0.0]},
            "h": 1.0, "m_Q": 1.0, "T": 1.0,
        },
    )
    assert resp.status_code == 422


def test_unknown_model(client):
    resp = client.post(
        "/distance",
        json={
            "model": "no-such-model",
            "x0": [0.0], "y": [1.0],
            "theta": {"mu": 10, "chi": 10, "nu_ctl": 100, "eta_ctl": 10,
                      "h_ctl": 1.0, "T": 1.0},
        },
    )
    assert resp.status_code == 422


def test_bound_with_given_distance(client):
    resp = client.post(
        "/bound",
        json={
            "model": "identity-2d",
            "x0": [0.0, 0.0], "y": [1.0, 0.0],
            "theta": {"mu": 10, "chi": 10, "nu_ctl": 100, "eta_ctl": 10,
                      "h_ctl": 1.0, "T": 1.0},
            "d_theta": 1.0,
        },
    )
    assert resp.status_code == 200
    body = resp.json()["bound"]
    assert body["formula_id"] == "thm24"
    assert isinstance(body["log_lower_bound"], float)
    assert body["log_lower_bound"] < 0.0


def test_bound_infinite_distance_serialized(client):
    resp = client.post(
        "/bound",
        json={
            "model": "identity-1d",
            "x0": [0.0], "y": [1.0],
            "theta": {"mu": 10, "chi": 0.5, "nu_ctl": 100, "eta_ctl": 10,
                      "h_ctl": 1.0, "T": 1.0},
        },
    )
    assert resp.status_code == 200
    body = resp.json()
    assert body["distance"]["d_theta_upper"] == "Infinity"
    assert body["bound"]["log_lower_bound"] == "-Infinity"


def test_verify_vacuous(client):
    resp = client.post(
        "/verify",
        json={
            "model": "identity-1d",
            "x0": [0.0], "y": [0.0], "T": 1.0,
            "log_lower_bound": -800.0,
            "n_paths": 1000,
        },
    )
    assert resp.status_code == 200
    assert resp.json()["verify"]["verdict"] == "VACUOUS"


def test_jsonable_sanitizer():
    import numpy as np

    out = _jsonable(
        {
            "a": np.float64(1.5),
            "b": np.bool_(True),
            "c": np.arange(3),
            "d": math.inf,
            "e": -math.inf,
            "f": math.nan,
        }
    )
    assert out == {
        "a": 1.5, "b": True, "c": [0, 1, 2],
        "d": "Infinity", "e": "-Infinity", "f": None,
    }
