"""
Integration tests for /presets endpoints
"""

import pytest
from fastapi.testclient import TestClient

from api.main import app
from lib.harness.config import RunConfig

client = TestClient(app)

pytestmark = pytest.mark.integration


class TestPresetsEndpoint:
    """Test suite for preset listing and lookup"""

    def test_list_presets(self):
        """Test every bundled preset validates as a run config"""
        response = client.get("/presets/")
        assert response.status_code == 200
        ids = [preset["id"] for preset in response.json()]
        assert {"toy", "cifar10_resnet56", "cifar100_resnet56"} <= set(ids)

    def test_get_preset(self):
        response = client.get("/presets/toy")
        assert response.status_code == 200
        preset = response.json()
        config = RunConfig.model_validate(preset["config"])
        assert config.model.arch == "toy-cnn"
        assert config.landscape.enabled

    def test_unknown_preset(self):
        response = client.get("/presets/nope")
        assert response.status_code == 404

    def test_schema_nests_run_config(self):
        """Test the schema exposes the run config sections"""
        response = client.get("/presets/schema")
        assert response.status_code == 200
        schema = response.json()
        assert "config" in schema["properties"]
        assert "RunConfig" in schema["$defs"]


class TestServiceEndpoints:
    """Test suite for root and health"""

    def test_root(self):
        response = client.get("/")
        assert response.status_code == 200
        assert response.json()["status"] == "operational"

    def test_health(self):
        response = client.get("/health")
        assert response.status_code == 200
        body = response.json()
        assert body["status"] == "healthy"
        assert body["device"] in ("cpu", "cuda", "mps")

    def test_docs(self):
        assert client.get("/docs").status_code == 200
