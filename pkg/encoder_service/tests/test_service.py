"""Service contract tests, run entirely in-process with the hash backend."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from fastapi.testclient import TestClient

from encoder_service.app import create_app
from encoder_service.backends import HashBackend, SentenceTransformerBackend, resolve_backend
from encoder_service.config import ServiceConfig


def hash_app(max_batch: int = 8, dim: int = 32):
    return create_app(ServiceConfig(model=f"hash:{dim}", max_batch=max_batch))


@pytest.fixture
def client():
    with TestClient(hash_app()) as c:
        yield c


def embed(client, texts):
    return client.post("/embed", json={"texts": texts})


# --- readiness ---------------------------------------------------------


def test_health_reports_model_and_dim(client):
    payload = client.get("/health").json()
    assert payload == {"status": "ok", "model": "hash:32", "dim": 32, "max_batch": 8}


def test_routes_answer_503_until_model_loaded():
    # no lifespan: the client never enters the context manager, so the
    # startup hook has not run and no backend exists yet
    cold = TestClient(hash_app())
    assert cold.get("/health").status_code == 503
    response = cold.post("/embed", json={"texts": ["a"]})
    assert response.status_code == 503
    assert "loading" in response.json()["error"]


def test_unknown_route_is_404(client):
    assert client.get("/nope").status_code == 404


# --- the embed contract -------------------------------------------------


def test_embed_round_trip_shape(client):
    payload = embed(client, ["alpha", "beta", "gamma"]).json()
    assert payload["dim"] == 32
    assert payload["model"] == "hash:32"
    assert len(payload["embeddings"]) == 3
    assert all(len(row) == 32 for row in payload["embeddings"])


def test_embed_vectors_are_unit_length(client):
    rows = embed(client, ["alpha", "beta gamma delta", "x"]).json()["embeddings"]
    for row in rows:
        assert abs(np.linalg.norm(row) - 1.0) < 1e-5


def test_identical_text_gets_identical_vector_across_calls(client):
    first = embed(client, ["reset my password"]).json()["embeddings"][0]
    second = embed(client, ["reset my password"]).json()["embeddings"][0]
    assert first == second


def test_order_is_preserved(client):
    ab = embed(client, ["alpha", "beta"]).json()["embeddings"]
    ba = embed(client, ["beta", "alpha"]).json()["embeddings"]
    assert ab[0] == ba[1] and ab[1] == ba[0]


def test_distinct_texts_get_distinct_vectors(client):
    rows = embed(client, ["alpha", "beta"]).json()["embeddings"]
    assert rows[0] != rows[1]


def test_wire_floats_carry_float32_precision(client):
    rows = embed(client, ["some words here"]).json()["embeddings"]
    for x in rows[0]:
        assert x == float(np.float32(x))


# --- rejection paths ----------------------------------------------------


@pytest.mark.parametrize(
    "body",
    [
        {},
        {"texts": []},
        {"texts": "alpha"},
        {"texts": ["alpha", ""]},
        {"texts": ["alpha", 3]},
        ["alpha"],
    ],
)
def test_bad_requests_get_400_with_error_envelope(client, body):
    response = client.post("/embed", json=body)
    assert response.status_code == 400
    assert "error" in response.json()


def test_non_json_body_gets_400(client):
    response = client.post(
        "/embed", content=b"not json", headers={"content-type": "application/json"}
    )
    assert response.status_code == 400


def test_oversize_batch_gets_413(client):
    response = embed(client, [f"t{i}" for i in range(9)])
    assert response.status_code == 413
    assert "exceeds" in response.json()["error"]


# --- backends -----------------------------------------------------------


def test_hash_backend_is_a_bag_of_tokens():
    backend = HashBackend(16)
    forward, backward = backend.encode(["alpha beta", "beta alpha"])
    assert np.array_equal(forward, backward)


def test_hash_backend_handles_whitespace_only_and_unicode():
    backend = HashBackend(16)
    rows = backend.encode(["   ", "naïve café ☕"])
    assert np.allclose(np.linalg.norm(rows, axis=1), 1.0, atol=1e-5)


def test_hash_backend_is_safe_under_concurrent_encodes():
    backend = HashBackend(32)
    with ThreadPoolExecutor(max_workers=8) as pool:
        results = list(pool.map(lambda _: backend.encode(["same text"]), range(16)))
    assert all(np.array_equal(results[0], r) for r in results)


def test_resolve_backend_parses_hash_specs():
    backend = resolve_backend("hash:16")
    assert isinstance(backend, HashBackend) and backend.dim == 16
    with pytest.raises(ValueError, match="hash:<dim>"):
        resolve_backend("hash:many")
    with pytest.raises(ValueError, match="dim >= 2"):
        resolve_backend("hash:1")


@pytest.mark.skipif(
    "ENCODER_SERVICE_ST_TEST" not in os.environ,
    reason="needs downloadable sentence-transformer weights; set ENCODER_SERVICE_ST_TEST=1 to run",
)
def test_sentence_transformer_backend_loads_real_model():
    backend = SentenceTransformerBackend("all-MiniLM-L6-v2")
    rows = backend.encode(["hello there"])
    assert rows.shape == (1, backend.dim)
    assert abs(np.linalg.norm(rows[0]) - 1.0) < 1e-5


# --- configuration ------------------------------------------------------


def test_config_reads_environment_overrides():
    cfg = ServiceConfig.from_env(
        {"ENCODER_MODEL": "hash:48", "ENCODER_PORT": "9100", "ENCODER_MAX_BATCH": "4"}
    )
    assert cfg == ServiceConfig(model="hash:48", host="127.0.0.1", port=9100, max_batch=4)


def test_config_rejects_nonpositive_batch():
    with pytest.raises(ValueError, match="max_batch"):
        ServiceConfig(max_batch=0)
