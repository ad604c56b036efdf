"""Chat-completion and embedding clients speaking the OpenAI-compatible wire protocol.

The HTTP wire format is ``POST {base_url}/chat/completions`` with
``{model, messages, temperature, seed?}`` (content read from
``choices[0].message.content``) and ``POST {base_url}/embeddings`` with
``{model, input}`` (vectors from ``data[i].embedding``). When an API key
is configured, requests carry ``Authorization: Bearer <key>``; the
``RAGBENCH_API_KEY`` environment variable overrides the configured key.

Deterministic in-process backends (echo, transcript keyed by prompt id,
hash-of-tokens embedder) ship here so end-to-end runs never need a GPU or
the network. Clients are shareable across threads; each batch call fans
out at most ``max_in_flight`` simultaneous requests and always returns
results in prompt order.
"""
from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import httpx

from ragbench.manifest import Prompt, PromptCollection
from ragbench.store import tokenize

API_KEY_ENV = "RAGBENCH_API_KEY"
DEFAULT_EMBED_DIM = 64


class InferenceError(Exception):
    """Base class for inference-layer failures."""


class TransportError(InferenceError):
    """Network or HTTP-status failure; `retryable` drives the retry policy."""

    def __init__(self, message: str, retryable: bool):
        super().__init__(message)
        self.retryable = retryable


class MalformedResponseError(InferenceError):
    """The endpoint answered 200 but the body is missing expected content."""


class BackendError(InferenceError):
    """An in-process mock backend could not serve the request."""


class DimensionInconsistencyError(InferenceError):
    """Embedding vectors within one batch disagree on dimension."""


@dataclass(frozen=True)
class InferenceConfig:
    base_url: str = "http://localhost:8000/v1"
    model_name: str = "mock"
    max_in_flight: int = 4
    timeout: float = 60.0
    max_retries: int = 3
    temperature: float = 0.0
    seed: int | None = 0
    api_key: str | None = None
    backoff_base: float = 0.5
    embed_batch_size: int = 128

    def __post_init__(self) -> None:
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.embed_batch_size < 1:
            raise ValueError("embed_batch_size must be >= 1")

    def resolved_api_key(self) -> str | None:
        return os.environ.get(API_KEY_ENV) or self.api_key


@dataclass(frozen=True)
class GenerationResult:
    """One model answer (or error marker) for one prompt."""

    prompt_id: str
    text: str
    usage: Mapping[str, int] | None = None
    latency: float = 0.0
    retries: int = 0
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


class EchoBackend:
    """Returns each prompt's user message verbatim."""

    def complete(self, prompt: Prompt, config: InferenceConfig) -> tuple[str, None]:
        return prompt.user_message, None


class TranscriptBackend:
    """Canned responses keyed by prompt id; id "*" serves as a default."""

    def __init__(self, responses: Mapping[str, str]):
        self.responses = dict(responses)

    @classmethod
    def from_path(cls, path: str) -> "TranscriptBackend":
        responses: dict[str, str] = {}
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    entry = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise BackendError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
                if "id" not in entry or "text" not in entry:
                    raise BackendError(f"{path}:{line_no}: transcript lines need 'id' and 'text'")
                responses[str(entry["id"])] = str(entry["text"])
        return cls(responses)

    def complete(self, prompt: Prompt, config: InferenceConfig) -> tuple[str, None]:
        if prompt.id in self.responses:
            return self.responses[prompt.id], None
        if "*" in self.responses:
            return self.responses["*"], None
        raise BackendError(f"no transcript entry for prompt {prompt.id!r}")


class HttpChatBackend:
    """POSTs to {base_url}/chat/completions and reads the first choice."""

    def __init__(self, config: InferenceConfig):
        self._config = config
        self._client = httpx.Client(timeout=config.timeout)

    def complete(self, prompt: Prompt, config: InferenceConfig) -> tuple[str, Mapping[str, int] | None]:
        body: dict = {
            "model": config.model_name,
            "messages": [
                {"role": "system", "content": prompt.system_message},
                {"role": "user", "content": prompt.user_message},
            ],
            "temperature": config.temperature,
        }
        if config.seed is not None:
            body["seed"] = config.seed
        data = _post_json(self._client, config, "/chat/completions", body)
        try:
            text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedResponseError(f"response missing message content: {exc}") from exc
        if not isinstance(text, str):
            raise MalformedResponseError("message content is not a string")
        return text, data.get("usage")


class HashEmbedder:
    """Deterministic test embedder: sha256-hashed tokens folded into a unit vector."""

    def __init__(self, dim: int = DEFAULT_EMBED_DIM):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim

    def _embed_one(self, text: str) -> list[float]:
        vec = [0.0] * self.dim
        tokens = tokenize(text) or [text]
        for token in tokens:
            digest = hashlib.sha256(token.encode("utf-8")).digest()
            idx = int.from_bytes(digest[:4], "big") % self.dim
            sign = 1.0 if digest[4] & 1 else -1.0
            vec[idx] += sign
        norm = sum(v * v for v in vec) ** 0.5
        if norm == 0.0:
            # Opposite-signed collisions cancelled out; fall back to the raw text hash.
            digest = hashlib.sha256(text.encode("utf-8")).digest()
            vec[int.from_bytes(digest[:4], "big") % self.dim] = 1.0
            norm = 1.0
        return [v / norm for v in vec]

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        return [self._embed_one(t) for t in texts]


class HttpEmbeddingBackend:
    """POSTs to {base_url}/embeddings; vectors returned in input order."""

    def __init__(self, config: InferenceConfig):
        self._config = config
        self._client = httpx.Client(timeout=config.timeout)

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        body = {"model": self._config.model_name, "input": list(texts)}
        data = _post_json(self._client, self._config, "/embeddings", body)
        try:
            rows = sorted(data["data"], key=lambda row: row["index"])
            vectors = [[float(x) for x in row["embedding"]] for row in rows]
        except (KeyError, TypeError) as exc:
            raise MalformedResponseError(f"embedding response malformed: {exc}") from exc
        if len(vectors) != len(texts):
            raise MalformedResponseError(
                f"asked for {len(texts)} embeddings, got {len(vectors)}"
            )
        return vectors


def _post_json(client: httpx.Client, config: InferenceConfig, path: str, body: dict) -> dict:
    url = config.base_url.rstrip("/") + path
    headers = {"Content-Type": "application/json"}
    key = config.resolved_api_key()
    if key:
        headers["Authorization"] = f"Bearer {key}"
    try:
        response = client.post(url, json=body, headers=headers)
    except httpx.HTTPError as exc:
        raise TransportError(f"request to {url} failed: {exc}", retryable=True) from exc
    if response.status_code == 429 or response.status_code >= 500:
        raise TransportError(f"HTTP {response.status_code} from {url}", retryable=True)
    if response.status_code >= 400:
        raise TransportError(
            f"HTTP {response.status_code} from {url}: {response.text[:200]}", retryable=False
        )
    try:
        return response.json()
    except (json.JSONDecodeError, ValueError) as exc:
        raise MalformedResponseError(f"non-JSON response from {url}") from exc


@dataclass
class InferenceClient:
    """Synchronous facade over a chat backend and an embedding backend.

    ``call_count`` tracks completed chat attempts (including retries) for
    test instrumentation.
    """

    config: InferenceConfig
    chat_backend: object = None
    embed_backend: object = None
    call_count: int = field(default=0)

    def __post_init__(self) -> None:
        if self.chat_backend is None:
            self.chat_backend = HttpChatBackend(self.config)
        if self.embed_backend is None:
            self.embed_backend = HttpEmbeddingBackend(self.config)

    def chat_batch(self, prompts: PromptCollection | Sequence[Prompt]) -> list[GenerationResult]:
        """One result per prompt, in prompt order, regardless of completion order.

        Per-prompt failures are collected into error markers rather than
        aborting the batch; transport errors are retried with exponential
        backoff, other HTTP 4xx are not.
        """
        prompt_list = list(prompts)
        if not prompt_list:
            raise ValueError("prompt collection must be non-empty")
        with ThreadPoolExecutor(max_workers=self.config.max_in_flight) as pool:
            return list(pool.map(self._complete_one, prompt_list))

    def _complete_one(self, prompt: Prompt) -> GenerationResult:
        start = time.monotonic()
        retries = 0
        while True:
            try:
                self.call_count += 1
                text, usage = self.chat_backend.complete(prompt, self.config)
                return GenerationResult(
                    prompt_id=prompt.id,
                    text=text,
                    usage=usage,
                    latency=time.monotonic() - start,
                    retries=retries,
                )
            except TransportError as exc:
                if exc.retryable and retries < self.config.max_retries:
                    time.sleep(self.config.backoff_base * (2**retries))
                    retries += 1
                    continue
                return self._error_result(prompt, str(exc), retries, start)
            except InferenceError as exc:
                return self._error_result(prompt, str(exc), retries, start)

    @staticmethod
    def _error_result(prompt: Prompt, message: str, retries: int, start: float) -> GenerationResult:
        return GenerationResult(
            prompt_id=prompt.id,
            text="",
            latency=time.monotonic() - start,
            retries=retries,
            error=message,
        )

    def embed_batch(self, texts: Sequence[str]) -> list[list[float]]:
        """One vector per text, order-preserving, consistent dimension.

        Transport failures raise after retries are exhausted: a store built
        over a partial corpus would silently corrupt every downstream score.
        """
        if not texts:
            raise ValueError("texts must be non-empty")
        size = self.config.embed_batch_size
        chunks = [list(texts[i : i + size]) for i in range(0, len(texts), size)]
        with ThreadPoolExecutor(max_workers=self.config.max_in_flight) as pool:
            chunk_vectors = list(pool.map(self._embed_chunk, chunks))
        vectors = [vec for chunk in chunk_vectors for vec in chunk]
        dims = {len(v) for v in vectors}
        if len(dims) > 1:
            raise DimensionInconsistencyError(f"mixed embedding dimensions in batch: {sorted(dims)}")
        return vectors

    def _embed_chunk(self, texts: list[str]) -> list[list[float]]:
        retries = 0
        while True:
            try:
                return self.embed_backend.embed(texts)
            except TransportError as exc:
                if exc.retryable and retries < self.config.max_retries:
                    time.sleep(self.config.backoff_base * (2**retries))
                    retries += 1
                    continue
                raise
