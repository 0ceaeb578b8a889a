"""Tests for the prediction API."""

import pytest
from fastapi.testclient import TestClient

from app.api import app, get_predictor
from src.inference import ChannelPredictor
from src.predictor import init_model


def _payload(frames=5, subcarriers=2, **extra):
    return {
        "estimates_re": [[1.0 + 0.1 * t] * subcarriers for t in range(frames)],
        "estimates_im": [[-0.5] * subcarriers for _ in range(frames)],
        **extra,
    }


@pytest.fixture
def client(fitted_model):
    app.dependency_overrides[get_predictor] = lambda: ChannelPredictor.from_model(fitted_model)
    yield TestClient(app)
    app.dependency_overrides.clear()


def test_health_check(client):
    response = client.get("/")
    assert response.status_code == 200
    assert response.json()["status"] == "ok"


def test_open_loop_forecast(client):
    response = client.post("/predict", json=_payload())
    assert response.status_code == 200
    body = response.json()
    assert body["mode"] == "open_loop"
    assert body["n_steps"] == 5
    assert body["n_subcarriers"] == 2
    assert len(body["downlink_re"]) == 5
    assert len(body["uplink_im"][0]) == 2


def test_closed_loop_forecast(client):
    response = client.post("/predict", json=_payload(mode="closed_loop", horizon=7))
    assert response.status_code == 200
    assert response.json()["n_steps"] == 7
    assert len(response.json()["uplink_re"]) == 7


def test_shape_mismatch_is_rejected(client):
    payload = _payload()
    payload["estimates_im"] = payload["estimates_im"][:-1]
    assert client.post("/predict", json=payload).status_code == 422


def test_horizon_bounds(client):
    assert client.post("/predict", json=_payload(mode="closed_loop", horizon=0)).status_code == 422


def test_untrained_model_is_a_client_error():
    app.dependency_overrides[get_predictor] = lambda: ChannelPredictor.from_model(init_model(4))
    try:
        response = TestClient(app).post("/predict", json=_payload())
    finally:
        app.dependency_overrides.clear()
    assert response.status_code == 422
    assert "not been trained" in response.json()["detail"]
