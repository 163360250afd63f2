"""Embedding and text-generation providers.

Two families ship in-tree:

* Mock backends, pure functions of their input with no network access. The
  embedder hashes tokens into a fixed-dimension bag-of-words vector and the
  generator concatenates and truncates, which keeps every structural test
  fully deterministic.
* HTTP backends, clients for OpenAI-compatible ``/embeddings`` and
  ``/chat/completions`` endpoints with bounded concurrency and retries.

Both families expose the same two surfaces: embedders implement ``embed``
and ``embed_batch``; generators implement ``summarize`` and ``complete``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from typing import Protocol, runtime_checkable

import httpx
import numpy as np

from .chunking import DEFAULT_TOKENIZER, Tokenizer

logger = logging.getLogger(__name__)

RETRY_ATTEMPTS = 3
RETRY_BASE_DELAY = 0.25  # seconds; doubles per retry


class BackendError(Exception):
    """A backend call failed for good (bad response, exhausted retries)."""


class TransientBackendError(BackendError):
    """Transport failure or 5xx; safe to retry. Carries the last HTTP status."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class BackendKind(str, Enum):
    MOCK = "mock"
    HTTP = "http"


@dataclass
class BackendConfig:
    kind: BackendKind = BackendKind.MOCK
    endpoint_url: str = ""
    model_name: str = ""
    api_key_env: str = "GRAPHDEX_API_KEY"
    timeout_ms: int = 30000
    max_concurrent: int = 8
    mock_dim: int = 64

    def __post_init__(self) -> None:
        self.kind = BackendKind(self.kind)
        if self.kind == BackendKind.HTTP and not self.endpoint_url:
            raise ValueError("http backends require endpoint_url")
        if self.timeout_ms < 1:
            raise ValueError("timeout_ms must be positive")
        if self.max_concurrent < 1:
            raise ValueError("max_concurrent must be at least 1")
        if self.mock_dim < 1:
            raise ValueError("mock_dim must be at least 1")


@runtime_checkable
class Embedder(Protocol):
    def embed(self, text: str) -> np.ndarray: ...

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]: ...


@runtime_checkable
class Generator(Protocol):
    def summarize(self, texts: list[str], max_len: int) -> str: ...

    def complete(self, prompt: str, max_tokens: int) -> str: ...


def _token_bucket(token: str, dim: int) -> int:
    # hashlib, not hash(): the built-in is salted per process
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % dim


class MockEmbedder:
    """Hashed bag-of-words embedder.

    Each token hashes into one of ``dim`` buckets; bucket counts are
    L2-normalized. Identical text always yields an identical unit vector,
    and texts sharing no token are orthogonal unless buckets collide.
    """

    def __init__(self, dim: int = 64, tokenizer: Tokenizer = DEFAULT_TOKENIZER):
        if dim < 1:
            raise ValueError("dim must be at least 1")
        self.dim = dim
        self._tokenizer = tokenizer

    def embed(self, text: str) -> np.ndarray:
        tokens = self._tokenizer.tokenize(text)
        if not tokens:
            raise ValueError("cannot embed text with no tokens")
        vec = np.zeros(self.dim, dtype=np.float64)
        for token in tokens:
            vec[_token_bucket(token, self.dim)] += 1.0
        return vec / np.linalg.norm(vec)

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        out = []
        for i, text in enumerate(texts):
            try:
                out.append(self.embed(text))
            except ValueError as exc:
                raise ValueError(f"item {i}: {exc}") from exc
        return out


class MockGenerator:
    """Deterministic stand-in for an LLM.

    ``summarize`` joins the inputs and keeps the first ``max_len`` tokens,
    which preserves the length contract without any model quality.
    ``complete`` recognizes the question/answer prompt layout used by the
    dataset synthesizer and produces a short templated justification.
    """

    def __init__(self, tokenizer: Tokenizer = DEFAULT_TOKENIZER):
        self._tokenizer = tokenizer

    def summarize(self, texts: list[str], max_len: int) -> str:
        if not texts:
            raise ValueError("nothing to summarize")
        if max_len < 1:
            raise ValueError("max_len must be at least 1")
        tokens = self._tokenizer.tokenize(" ".join(texts))
        return " ".join(tokens[:max_len])

    def complete(self, prompt: str, max_tokens: int) -> str:
        if max_tokens < 1:
            raise ValueError("max_tokens must be at least 1")
        question = _first_tagged_line(prompt, "Question:")
        answer = _first_tagged_line(prompt, "Answer:")
        passage = _first_passage_line(prompt)
        if question and answer:
            snippet = " ".join(self._tokenizer.tokenize(passage)[:12]) if passage else "the retrieved material"
            reply = (
                f"The passages state that {snippet}. "
                f"This bears directly on the question, so the supported answer is {answer}."
            )
        else:
            reply = prompt
        tokens = self._tokenizer.tokenize(reply)
        return " ".join(tokens[:max_tokens])


def _first_tagged_line(prompt: str, tag: str) -> str:
    for line in prompt.splitlines():
        stripped = line.strip()
        if stripped.startswith(tag):
            return stripped[len(tag) :].strip()
    return ""


def _first_passage_line(prompt: str) -> str:
    lines = prompt.splitlines()
    for i, line in enumerate(lines):
        if line.strip() == "Passages:":
            for candidate in lines[i + 1 :]:
                text = candidate.strip()
                if text:
                    return text.lstrip("0123456789. ")
    return ""


def _unit(vec: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        raise BackendError("service returned a zero embedding")
    return vec / norm


def _redact(text: str, secret: str) -> str:
    return text.replace(secret, "[redacted]") if secret else text


class _HttpBackend:
    """Shared plumbing: auth, bounded concurrency, retry with backoff."""

    def __init__(self, config: BackendConfig, transport: httpx.BaseTransport | None = None):
        if config.kind != BackendKind.HTTP:
            raise ValueError("HTTP backend requires kind='http'")
        self._config = config
        self._api_key = os.environ.get(config.api_key_env, "")
        headers = {}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        self._client = httpx.Client(
            base_url=config.endpoint_url,
            timeout=config.timeout_ms / 1000.0,
            headers=headers,
            transport=transport,
        )
        self._gate = threading.BoundedSemaphore(config.max_concurrent)

    def close(self) -> None:
        self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    def _post(self, path: str, payload: dict) -> dict:
        if logger.isEnabledFor(logging.DEBUG):
            logger.debug("POST %s body=%s", path, _redact(json.dumps(payload), self._api_key))
        last_error: TransientBackendError | None = None
        for attempt in range(RETRY_ATTEMPTS):
            if attempt:
                time.sleep(RETRY_BASE_DELAY * 2 ** (attempt - 1))
            try:
                with self._gate:
                    response = self._client.post(path, json=payload)
            except httpx.HTTPError as exc:
                last_error = TransientBackendError(f"transport failure on {path}: {exc}")
                logger.debug("attempt %d on %s failed: %s", attempt + 1, path, exc)
                continue
            if response.status_code >= 500:
                last_error = TransientBackendError(
                    f"{path} returned {response.status_code}", status=response.status_code
                )
                logger.debug("attempt %d on %s got %d", attempt + 1, path, response.status_code)
                continue
            if response.status_code >= 400:
                raise BackendError(
                    f"{path} returned {response.status_code}: "
                    f"{_redact(response.text[:500], self._api_key)}"
                )
            if logger.isEnabledFor(logging.DEBUG):
                logger.debug(
                    "POST %s -> %d body=%s",
                    path,
                    response.status_code,
                    _redact(response.text[:500], self._api_key),
                )
            try:
                return response.json()
            except ValueError as exc:
                raise BackendError(f"{path} returned invalid JSON: {exc}") from exc
        assert last_error is not None
        raise last_error


class HttpEmbedder(_HttpBackend):
    """Client for an OpenAI-compatible ``/embeddings`` endpoint.

    Vectors are L2-normalized on receipt so downstream similarity code can
    assume unit norm regardless of the serving model.
    """

    def embed(self, text: str) -> np.ndarray:
        if not text.split():
            raise ValueError("cannot embed text with no tokens")
        data = self._post(
            "/embeddings", {"model": self._config.model_name, "input": [text]}
        )
        try:
            raw = data["data"][0]["embedding"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed embeddings response: {exc}") from exc
        return _unit(np.asarray(raw, dtype=np.float64))

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        for i, text in enumerate(texts):
            if not text.split():
                raise ValueError(f"item {i}: cannot embed text with no tokens")
        with ThreadPoolExecutor(max_workers=self._config.max_concurrent) as pool:
            futures = [pool.submit(self.embed, text) for text in texts]
            out = []
            for i, future in enumerate(futures):
                try:
                    out.append(future.result())
                except TransientBackendError as exc:
                    raise TransientBackendError(f"item {i}: {exc}", exc.status) from exc
                except BackendError as exc:
                    raise BackendError(f"item {i}: {exc}") from exc
        return out


class HttpGenerator(_HttpBackend):
    """Client for an OpenAI-compatible ``/chat/completions`` endpoint."""

    def __init__(
        self,
        config: BackendConfig,
        transport: httpx.BaseTransport | None = None,
        tokenizer: Tokenizer = DEFAULT_TOKENIZER,
    ):
        super().__init__(config, transport)
        self._tokenizer = tokenizer

    def complete(self, prompt: str, max_tokens: int) -> str:
        if max_tokens < 1:
            raise ValueError("max_tokens must be at least 1")
        data = self._post(
            "/chat/completions",
            {
                "model": self._config.model_name,
                "messages": [{"role": "user", "content": prompt}],
                "max_tokens": max_tokens,
            },
        )
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed chat response: {exc}") from exc

    def summarize(self, texts: list[str], max_len: int) -> str:
        if not texts:
            raise ValueError("nothing to summarize")
        prompt = render_template(
            load_template("summarize.txt"),
            body="\n\n".join(texts),
            max_len=str(max_len),
        )
        out = self.complete(prompt, max_len)
        tokens = self._tokenizer.tokenize(out)
        if len(tokens) > max_len:
            logger.warning(
                "summary ran over budget (%d > %d tokens); truncated", len(tokens), max_len
            )
            return " ".join(tokens[:max_len])
        return out


def load_template(name: str, template_dir: str | None = None) -> str:
    """Reads a prompt template, from ``template_dir`` or the packaged set."""
    if template_dir is not None:
        with open(os.path.join(template_dir, name), "r", encoding="utf-8") as handle:
            return handle.read()
    return (
        resources.files("graphdex").joinpath("templates", name).read_text(encoding="utf-8")
    )


def render_template(template: str, **fields: str) -> str:
    try:
        return template.format(**fields)
    except (KeyError, IndexError) as exc:
        raise ValueError(f"template references an unknown field: {exc}") from exc


def make_embedder(
    config: BackendConfig, transport: httpx.BaseTransport | None = None
) -> Embedder:
    if config.kind == BackendKind.MOCK:
        return MockEmbedder(dim=config.mock_dim)
    return HttpEmbedder(config, transport)


def make_generator(
    config: BackendConfig, transport: httpx.BaseTransport | None = None
) -> Generator:
    if config.kind == BackendKind.MOCK:
        return MockGenerator()
    return HttpGenerator(config, transport)
