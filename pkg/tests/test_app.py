from pathlib import Path

import pytest
from flask.testing import FlaskClient

from app_main import APP_VERSION, app
from conftest import TINY_SIGNAL_SCHEME


@pytest.fixture
def client() -> FlaskClient:
    app.config["TESTING"] = True
    return app.test_client()


def test_version(client: FlaskClient):
    response = client.get("/version")
    assert response.status_code == 200
    assert response.get_json()["SpeBench"] == APP_VERSION


def test_run_params(client: FlaskClient):
    response = client.get("/run-params")
    assert response.status_code == 200
    assert response.get_json()["iterations"] == 2000
    assert response.get_json()["divergence-threshold"] == 1e6


class TestTheoryCheck:

    def test_passes(self, client: FlaskClient):
        response = client.get("/theory-check?seed=1")
        assert response.status_code == 200
        body = response.get_json()
        assert body["passed"] and len(body["checks"]) == 9

    def test_rejects_bad_seed(self, client: FlaskClient):
        response = client.get("/theory-check?seed=abc")
        assert response.status_code == 400
        assert response.get_json()["errors"]


class TestMetrics:

    def test_requires_images(self, client: FlaskClient):
        response = client.post("/metrics", json={})
        assert response.status_code == 400
        assert len(response.get_json()["errors"]) == 2

    def test_missing_file(self, client: FlaskClient, tmp_path: Path):
        response = client.post("/metrics", json={"true": str(tmp_path / "a.pgm"),
                                                 "synthesis": str(tmp_path / "b.pgm")})
        assert response.status_code == 400


class TestExperiments:

    def test_train(self, client: FlaskClient, tmp_path: Path):
        response = client.post("/train", json={**TINY_SIGNAL_SCHEME, "output-dir": str(tmp_path)})
        assert response.status_code == 200
        assert response.get_json()["status"] == "ok"
        assert list(tmp_path.glob("*/seed-0/report.json"))

    def test_train_rejects_unknown_keys(self, client: FlaskClient, tmp_path: Path):
        response = client.post("/train", json={**TINY_SIGNAL_SCHEME, "epochs": 3, "output-dir": str(tmp_path)})
        assert response.status_code == 400

    def test_compare(self, client: FlaskClient, tmp_path: Path):
        response = client.post("/compare", json={**TINY_SIGNAL_SCHEME, "encoders": "pe:L=3",
                                                 "seeds": [0, 1], "output-dir": str(tmp_path)})
        assert response.status_code == 200
        body = response.get_json()
        assert body["encoders"] == ["pe:L=3"] and len(body["rows"]) == 2
        assert (tmp_path / "report.json").exists()

    def test_compare_rejects_seeds(self, client: FlaskClient):
        response = client.post("/compare", json={**TINY_SIGNAL_SCHEME, "encoders": ["pe"], "seeds": "0,1"})
        assert response.status_code == 400
