"""HTTP API tests through FastAPI's TestClient."""
import numpy as np
import pytest
from fastapi.testclient import TestClient

import api_server
from engines import export_packed
from training import Checkpoint


@pytest.fixture
def client():
    api_server.packed_models.clear()
    api_server.model_info.clear()
    return TestClient(api_server.app)


@pytest.fixture
def checkpoint(tiny_model):
    return Checkpoint.from_model(tiny_model, "tiny", mode="full-binary")


@pytest.fixture
def packed(checkpoint):
    return export_packed(checkpoint, 64, "hwc", "float64")


def upload(client, packed):
    return client.post("/api/models", files={"file": ("tiny.bdbn", packed.to_bytes(), "application/octet-stream")})


class TestHealth:
    def test_root(self, client):
        body = client.get("/").json()
        assert body["status"] == "running"
        assert body["models_loaded"] == 0


class TestModels:
    def test_upload_registers_model(self, client, packed):
        response = upload(client, packed)
        assert response.status_code == 200
        info = response.json()
        assert info["model_id"] == "model_1"
        assert info["input_shape"] == [1, 8, 8]
        assert info["num_classes"] == 4
        assert info["binarized_layers"] == 3
        assert info["bytes_float32"] > 20 * info["bytes_packed"]
        assert [m["model_id"] for m in client.get("/api/models").json()] == ["model_1"]

    def test_upload_rejects_garbage(self, client):
        response = client.post("/api/models", files={"file": ("x.bdbn", b"garbage", "application/octet-stream")})
        assert response.status_code == 400

    def test_predict_matches_packed_model(self, client, packed, rng):
        model_id = upload(client, packed).json()["model_id"]
        images = rng.normal(size=(3, 1, 8, 8))
        response = client.post(f"/api/models/{model_id}/predict", json={"inputs": images.tolist()})
        assert response.status_code == 200
        body = response.json()
        expected = packed.predict(images)
        np.testing.assert_allclose(np.array(body["logits"]), expected, rtol=1e-12, atol=1e-12)
        assert body["predictions"] == [int(k) for k in expected.argmax(axis=1)]

    def test_predict_unknown_model(self, client):
        response = client.post("/api/models/model_9/predict", json={"inputs": [[0.0]]})
        assert response.status_code == 404

    def test_predict_wrong_shape(self, client, packed):
        model_id = upload(client, packed).json()["model_id"]
        response = client.post(f"/api/models/{model_id}/predict", json={"inputs": np.zeros((2, 3, 8, 8)).tolist()})
        assert response.status_code == 400


class TestAnalyze:
    def test_checkpoint_layers(self, client, checkpoint):
        response = client.post("/api/analyze", files={"file": ("tiny.bdck", checkpoint.to_bytes(), "application/octet-stream")})
        assert response.status_code == 200
        body = response.json()
        assert body["checkpoint"] == "tiny"
        assert body["mode"] == "full-binary"
        assert [row["layer_id"] for row in body["layers"]] == ["conv1", "conv2", "conv3", "conv4", "fc"]

    def test_corrupt_checkpoint(self, client):
        response = client.post("/api/analyze", files={"file": ("bad.bdck", b"BDCK", "application/octet-stream")})
        assert response.status_code == 400
