from __future__ import annotations

import threading

import pytest

from ragbench.inference import (
    BackendError,
    DimensionInconsistencyError,
    EchoBackend,
    HashEmbedder,
    InferenceClient,
    InferenceConfig,
    TranscriptBackend,
)
from ragbench.manifest import PromptCollection

from conftest import make_prompt, write_jsonl


def http_config(server, **overrides):
    defaults = dict(
        base_url=server.base_url,
        model_name="test-model",
        max_in_flight=4,
        timeout=10.0,
        max_retries=3,
        backoff_base=0.01,
    )
    defaults.update(overrides)
    return InferenceConfig(**defaults)


def mock_client(backend=None, **overrides) -> InferenceClient:
    config = InferenceConfig(**overrides) if overrides else InferenceConfig()
    return InferenceClient(config, backend or EchoBackend(), HashEmbedder(dim=16))


class TestConfig:
    def test_invariants(self):
        with pytest.raises(ValueError):
            InferenceConfig(max_in_flight=0)
        with pytest.raises(ValueError):
            InferenceConfig(timeout=0)

    def test_env_var_overrides_api_key(self, monkeypatch):
        config = InferenceConfig(api_key="from-config")
        assert config.resolved_api_key() == "from-config"
        monkeypatch.setenv("RAGBENCH_API_KEY", "from-env")
        assert config.resolved_api_key() == "from-env"


class TestMockBackends:
    def test_echo_returns_user_message(self):
        results = mock_client().chat_batch([make_prompt("p1", "X")])
        assert results[0].text == "X"
        assert results[0].ok

    def test_results_in_prompt_order(self):
        prompts = [make_prompt(f"p{i}", f"m{i}") for i in range(3)]
        results = mock_client(max_in_flight=1).chat_batch(prompts)
        assert [r.prompt_id for r in results] == ["p0", "p1", "p2"]

    def test_empty_collection_rejected(self):
        with pytest.raises(ValueError):
            mock_client().chat_batch(PromptCollection(prompts=(), template_source=""))

    def test_transcript_keyed_by_prompt_id(self):
        backend = TranscriptBackend({"p1": "alpha", "p2": "beta"})
        results = mock_client(backend).chat_batch(
            [make_prompt("p2", "x"), make_prompt("p1", "y")]
        )
        assert [r.text for r in results] == ["beta", "alpha"]

    def test_transcript_missing_id_becomes_error_marker(self):
        backend = TranscriptBackend({"p1": "alpha"})
        results = mock_client(backend).chat_batch([make_prompt("p9", "x")])
        assert not results[0].ok
        assert "p9" in results[0].error

    def test_transcript_default_entry(self):
        backend = TranscriptBackend({"*": "fallback"})
        results = mock_client(backend).chat_batch([make_prompt("anything", "x")])
        assert results[0].text == "fallback"

    def test_transcript_from_path(self, tmp_path):
        path = write_jsonl(tmp_path / "t.jsonl", [{"id": "p1", "text": "canned"}])
        backend = TranscriptBackend.from_path(path)
        assert backend.responses == {"p1": "canned"}

    def test_transcript_bad_file(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"id": "p1"}\n')
        with pytest.raises(BackendError):
            TranscriptBackend.from_path(str(path))


class TestHashEmbedder:
    def test_deterministic(self):
        embedder = HashEmbedder(dim=16)
        first = embedder.embed(["same text"])[0]
        second = embedder.embed(["same text"])[0]
        assert first == second

    def test_different_texts_differ(self):
        embedder = HashEmbedder(dim=64)
        a, b = embedder.embed(["one thing", "another thing"])
        assert a != b

    def test_batch_order_preserved(self):
        embedder = HashEmbedder(dim=16)
        vectors = embedder.embed(["a", "b", "a", "c", "a"])
        assert vectors[0] == vectors[2] == vectors[4]
        assert vectors[0] != vectors[1]

    def test_unit_norm(self):
        embedder = HashEmbedder(dim=32)
        for vec in embedder.embed(["hello world", "", "x"]):
            norm = sum(v * v for v in vec) ** 0.5
            assert norm == pytest.approx(1.0, abs=1e-9)

    def test_client_embed_batch_chunks_preserve_order(self):
        client = mock_client(embed_batch_size=2)
        texts = [f"text {i}" for i in range(7)]
        direct = HashEmbedder(dim=16).embed(texts)
        assert client.embed_batch(texts) == direct

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError):
            mock_client().embed_batch([])


class TestHttpChat:
    def test_echo_over_http(self, mock_server):
        client = InferenceClient(http_config(mock_server))
        results = client.chat_batch([make_prompt("p1", "ping")])
        assert results[0].text == "ping"
        assert results[0].usage is None

    def test_request_carries_system_and_user(self, mock_server):
        client = InferenceClient(http_config(mock_server))
        client.chat_batch([make_prompt("p1", "user msg", system="system msg")])
        body = mock_server.requests[0]["body"]
        assert body["messages"][0] == {"role": "system", "content": "system msg"}
        assert body["messages"][1] == {"role": "user", "content": "user msg"}
        assert body["model"] == "test-model"

    def test_429_twice_then_success(self, mock_server):
        state = {"calls": 0}

        def hook(body):
            state["calls"] += 1
            if state["calls"] <= 2:
                return 429, {"error": "rate limited"}
            return None

        mock_server.chat_hook = hook
        client = InferenceClient(http_config(mock_server))
        results = client.chat_batch([make_prompt("p1", "hello")])
        assert results[0].ok
        assert results[0].text == "hello"
        assert results[0].retries == 2

    def test_4xx_is_not_retried(self, mock_server):
        mock_server.chat_hook = lambda body: (400, {"error": "bad request"})
        client = InferenceClient(http_config(mock_server))
        results = client.chat_batch([make_prompt("p1", "x")])
        assert not results[0].ok
        assert results[0].retries == 0
        assert len(mock_server.requests) == 1

    def test_5xx_retries_until_exhausted(self, mock_server):
        mock_server.chat_hook = lambda body: (500, {"error": "boom"})
        client = InferenceClient(http_config(mock_server, max_retries=2))
        results = client.chat_batch([make_prompt("p1", "x")])
        assert not results[0].ok
        assert results[0].retries == 2
        assert len(mock_server.requests) == 3

    def test_malformed_response_is_error_marker_without_retry(self, mock_server):
        mock_server.chat_hook = lambda body: (200, {"choices": []})
        client = InferenceClient(http_config(mock_server))
        results = client.chat_batch([make_prompt("p1", "x")])
        assert not results[0].ok
        assert len(mock_server.requests) == 1

    def test_batch_collects_per_prompt_errors(self, mock_server):
        def hook(body):
            user = body["messages"][1]["content"]
            if user == "fail":
                return 400, {"error": "nope"}
            return None

        mock_server.chat_hook = hook
        client = InferenceClient(http_config(mock_server))
        results = client.chat_batch(
            [make_prompt("p1", "ok1"), make_prompt("p2", "fail"), make_prompt("p3", "ok2")]
        )
        assert [r.ok for r in results] == [True, False, True]
        assert results[0].text == "ok1" and results[2].text == "ok2"

    def test_auth_header_sent_when_key_set(self, mock_server):
        client = InferenceClient(http_config(mock_server, api_key="sekrit"))
        client.chat_batch([make_prompt("p1", "x")])
        assert mock_server.requests[0]["auth"] == "Bearer sekrit"

    def test_no_auth_header_without_key(self, mock_server):
        client = InferenceClient(http_config(mock_server))
        client.chat_batch([make_prompt("p1", "x")])
        assert mock_server.requests[0]["auth"] is None

    def test_seed_and_temperature_in_body(self, mock_server):
        client = InferenceClient(http_config(mock_server, temperature=0.0, seed=7))
        client.chat_batch([make_prompt("p1", "x")])
        body = mock_server.requests[0]["body"]
        assert body["temperature"] == 0.0
        assert body["seed"] == 7

    def test_concurrency_never_exceeds_limit(self, mock_server):
        mock_server.delay = 0.01
        client = InferenceClient(http_config(mock_server, max_in_flight=2))
        client.chat_batch([make_prompt(f"p{i}", "x") for i in range(12)])
        assert mock_server.max_concurrent <= 2

    def test_order_independent_of_completion_time(self, mock_server):
        lock = threading.Lock()
        state = {"seen": 0}

        def hook(body):
            # First-arriving requests sleep longest, inverting completion order.
            with lock:
                state["seen"] += 1
                rank = state["seen"]
            import time

            time.sleep(max(0.0, (5 - rank) * 0.01))
            return None

        mock_server.chat_hook = hook
        client = InferenceClient(http_config(mock_server, max_in_flight=4))
        prompts = [make_prompt(f"p{i}", f"m{i}") for i in range(4)]
        results = client.chat_batch(prompts)
        assert [r.prompt_id for r in results] == [p.id for p in prompts]
        assert [r.text for r in results] == [p.user_message for p in prompts]


class TestHttpEmbeddings:
    def test_vectors_in_input_order(self, mock_server):
        def hook(body):
            data = [
                {"index": i, "embedding": [float(i), 1.0]}
                for i in range(len(body["input"]))
            ]
            return 200, {"data": list(reversed(data))}  # shuffled on purpose

        mock_server.embed_hook = hook
        client = InferenceClient(http_config(mock_server))
        vectors = client.embed_batch(["a", "b", "c", "d", "e"])
        assert vectors == [[float(i), 1.0] for i in range(5)]

    def test_dimension_inconsistency_raises(self, mock_server):
        def hook(body):
            data = [
                {"index": 0, "embedding": [1.0, 0.0]},
                {"index": 1, "embedding": [1.0, 0.0, 0.0]},
            ]
            return 200, {"data": data}

        mock_server.embed_hook = hook
        client = InferenceClient(http_config(mock_server))
        with pytest.raises(DimensionInconsistencyError):
            client.embed_batch(["a", "b"])

    def test_transport_error_raises_after_retries(self, mock_server):
        mock_server.embed_hook = lambda body: (503, {"error": "down"})
        client = InferenceClient(http_config(mock_server, max_retries=1))
        with pytest.raises(Exception, match="503"):
            client.embed_batch(["a"])
