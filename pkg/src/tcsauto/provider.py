"""Chat-completion and embedding backends.

``HttpProvider`` speaks the de-facto ``/chat/completions`` and ``/embeddings``
wire format; ``MockProvider`` is a deterministic offline stand-in used by the
tests and by every CLI command run with ``--mock``.
"""

from __future__ import annotations

import hashlib
import logging
import os
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Protocol, Sequence

import httpx
import numpy as np

from .corpus import word_spans, words
from .errors import (
    AuthMissing,
    InvalidParams,
    MalformedResponse,
    ProviderError,
    RateLimited,
    TransportError,
)
from .metrics import EmbeddingVector

log = logging.getLogger(__name__)

EMBED_BATCH = 64
MOCK_EMBED_TAG = "hash-mock/blake2b64"


@dataclass(frozen=True)
class ProviderConfig:
    base_url: str = "https://api.openai.com/v1"
    api_key_env: str = "LLM_API_KEY"
    chat_model: str = "gpt-3.5-turbo-0125"
    summary_model: str = "gpt-4-0125-preview"
    embed_model: str = "text-embedding-3-small"
    embed_dim: int = 1536
    timeout: float = 60.0
    max_retries: int = 5
    max_in_flight: int = 4

    def __post_init__(self) -> None:
        if self.embed_dim < 1:
            raise InvalidParams("embed_dim must be >= 1")
        if self.max_in_flight < 1:
            raise InvalidParams("max_in_flight must be >= 1")
        if self.max_retries < 0:
            raise InvalidParams("max_retries must be >= 0")


@dataclass(frozen=True)
class ChatRequest:
    system: str
    user: str
    model: str = ""
    temperature: float = 0.0
    max_tokens: int | None = None
    # lookup key for canned mock responses; never sent over the wire
    key: str | None = None

    def __post_init__(self) -> None:
        if not self.user:
            raise InvalidParams("user message must be non-empty")
        if self.temperature < 0:
            raise InvalidParams("temperature must be >= 0")


@dataclass(frozen=True)
class Usage:
    prompt_tokens: int = 0
    completion_tokens: int = 0


@dataclass(frozen=True)
class ChatResponse:
    text: str
    model: str
    usage: Usage = field(default_factory=Usage)


class Provider(Protocol):
    config: ProviderConfig

    def chat(self, req: ChatRequest) -> ChatResponse: ...

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]: ...


def _check_texts(texts: Sequence[str]) -> None:
    if not texts:
        raise InvalidParams("embed needs at least one text")
    if any(not t for t in texts):
        raise InvalidParams("embed texts must be non-empty")


# -- hashing embedder --------------------------------------------------------

def _token_hash(token: str) -> int:
    return int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "big")


def mock_embed(text: str, dim: int) -> EmbeddingVector:
    """Feature-hashing embedding.

    Tokens (lowercased, whitespace-split) are hashed with 64-bit BLAKE2b; each
    adds +-1 at ``hash % dim`` with the sign taken from bit 63. The result is
    scaled to unit length and rounded to float32 values so it survives the
    vector store unchanged. A text whose buckets cancel out (or is empty)
    maps to the first basis vector.
    """
    if dim < 2:
        raise InvalidParams("mock embedding dim must be >= 2")
    acc = np.zeros(dim, dtype=np.float64)
    for tok in words(text.lower()):
        h = _token_hash(tok)
        acc[h % dim] += -1.0 if h >> 63 else 1.0
    norm = float(np.sqrt(np.dot(acc, acc)))
    if norm == 0.0:
        acc[0] = 1.0
    else:
        acc /= norm
    return EmbeddingVector(tuple(acc.astype(np.float32).tolist()), MOCK_EMBED_TAG)


# -- mock chat ---------------------------------------------------------------

@dataclass(frozen=True)
class MockMode:
    """One of: echo, truncate, canned, dictfix.

    ``truncate`` keeps the first ``n`` words; ``lengths`` overrides ``n`` per
    request key. ``canned`` looks up ``responses`` by request key, then by
    the user text. ``dictfix`` echoes the user text with words replaced
    through ``fixes``.
    """

    kind: str = "echo"
    n: int | None = None
    lengths: Mapping[str, int] = field(default_factory=dict)
    responses: Mapping[str, str] = field(default_factory=dict)
    fixes: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in ("echo", "truncate", "canned", "dictfix"):
            raise InvalidParams(f"unknown mock mode {self.kind!r}")
        if self.n is not None and self.n < 0:
            raise InvalidParams("truncate length must be >= 0")


def _truncate_words(text: str, n: int) -> str:
    return " ".join(words(text)[:n])


def _dictfix(text: str, fixes: Mapping[str, str]) -> str:
    out = []
    cursor = 0
    for s, e in word_spans(text):
        out.append(text[cursor:s])
        w = text[s:e]
        out.append(fixes.get(w, w))
        cursor = e
    out.append(text[cursor:])
    return "".join(out)


class MockProvider:
    """Offline provider: scripted chat plus the hashing embedder."""

    def __init__(self, mode: MockMode | None = None, config: ProviderConfig | None = None) -> None:
        self.mode = mode or MockMode()
        self.config = config or ProviderConfig()
        self.calls: list[ChatRequest] = []
        self._lock = threading.Lock()

    def _reply(self, req: ChatRequest) -> str:
        mode = self.mode
        if mode.kind == "echo":
            return req.user
        if mode.kind == "truncate":
            n = mode.lengths.get(req.key, mode.n) if req.key is not None else mode.n
            if n is None:
                raise ProviderError(f"mock truncate has no length for key {req.key!r}")
            return _truncate_words(req.user, n)
        if mode.kind == "canned":
            if req.key is not None and req.key in mode.responses:
                return mode.responses[req.key]
            if req.user in mode.responses:
                return mode.responses[req.user]
            raise ProviderError(f"mock canned has no response for key {req.key!r}")
        return _dictfix(req.user, mode.fixes)

    def chat(self, req: ChatRequest) -> ChatResponse:
        with self._lock:
            self.calls.append(req)
        text = self._reply(req)
        usage = Usage(len(words(req.system)) + len(words(req.user)), len(words(text)))
        return ChatResponse(text=text, model=req.model or "mock", usage=usage)

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        _check_texts(texts)
        return [mock_embed(t, self.config.embed_dim) for t in texts]


# -- HTTP wire client --------------------------------------------------------

def backoff_delay(retry: int, rng: random.Random) -> float:
    """Delay before the ``retry``-th retry (1-based): 2**(retry-1) seconds
    stretched by up to 50% jitter."""
    base = 2.0 ** (retry - 1)
    return base * (1.0 + 0.5 * rng.random())


class HttpProvider:
    """Client for OpenAI-compatible ``/chat/completions`` and ``/embeddings``.

    The API key is read from ``config.api_key_env`` right before each request
    and is never logged or stored on the instance.
    """

    def __init__(
        self,
        config: ProviderConfig,
        *,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
    ) -> None:
        self.config = config
        self._client = httpx.Client(
            base_url=config.base_url.rstrip("/") + "/",
            timeout=config.timeout,
            transport=transport,
        )
        self._slots = threading.BoundedSemaphore(config.max_in_flight)
        self._sleep = sleep
        self._rng = rng or random.Random()
        self._rng_lock = threading.Lock()

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> HttpProvider:
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _api_key(self) -> str:
        key = os.environ.get(self.config.api_key_env)
        if not key:
            raise AuthMissing(self.config.api_key_env)
        return key

    def _post(self, path: str, body: dict) -> dict:
        headers = {"Authorization": f"Bearer {self._api_key()}"}
        attempts = self.config.max_retries + 1
        last: ProviderError | None = None
        for attempt in range(attempts):
            if attempt:
                with self._rng_lock:
                    delay = backoff_delay(attempt, self._rng)
                log.info("retrying %s in %.2fs (%s)", path, delay, last)
                self._sleep(delay)
            try:
                with self._slots:
                    resp = self._client.post(path, json=body, headers=headers)
            except httpx.TimeoutException as exc:
                last = TransportError(f"timeout calling {path}: {type(exc).__name__}")
                continue
            except httpx.HTTPError as exc:
                raise TransportError(f"transport failure calling {path}: {type(exc).__name__}") from None
            if resp.status_code == 429:
                last = RateLimited(f"{path} rate limited after {attempts} attempts")
                continue
            if resp.status_code >= 500:
                last = TransportError(f"{path} returned HTTP {resp.status_code}")
                continue
            if resp.status_code in (401, 403):
                raise ProviderError(f"{path} rejected credentials (HTTP {resp.status_code})")
            if resp.status_code >= 400:
                raise TransportError(f"{path} returned HTTP {resp.status_code}")
            try:
                data = resp.json()
            except ValueError:
                raise MalformedResponse(f"{path} returned non-JSON body") from None
            if not isinstance(data, dict):
                raise MalformedResponse(f"{path} returned a non-object body")
            return data
        assert last is not None
        raise last

    def chat(self, req: ChatRequest) -> ChatResponse:
        body: dict = {
            "model": req.model or self.config.chat_model,
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": req.user},
            ],
            "temperature": req.temperature,
        }
        if req.max_tokens is not None:
            body["max_tokens"] = req.max_tokens
        data = self._post("chat/completions", body)
        try:
            text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise MalformedResponse("missing choices[0].message.content") from None
        if not isinstance(text, str):
            raise MalformedResponse("choices[0].message.content is not a string")
        usage = data.get("usage") or {}
        try:
            u = Usage(int(usage.get("prompt_tokens", 0)), int(usage.get("completion_tokens", 0)))
        except (TypeError, ValueError, AttributeError):
            raise MalformedResponse("usage counts are not integers") from None
        if u.prompt_tokens < 0 or u.completion_tokens < 0:
            raise MalformedResponse("negative usage counts")
        return ChatResponse(text=text, model=str(data.get("model", body["model"])), usage=u)

    def _embed_batch(self, batch: Sequence[str]) -> list[EmbeddingVector]:
        data = self._post("embeddings", {"model": self.config.embed_model, "input": list(batch)})
        items = data.get("data")
        if not isinstance(items, list) or len(items) != len(batch):
            raise MalformedResponse("embedding response has the wrong number of items")
        if all(isinstance(it, dict) and "index" in it for it in items):
            items = sorted(items, key=lambda it: it["index"])
        out = []
        for it in items:
            try:
                vec = EmbeddingVector(tuple(it["embedding"]), self.config.embed_model)
            except (KeyError, TypeError, ValueError):
                raise MalformedResponse("malformed embedding item") from None
            if vec.dim != self.config.embed_dim:
                raise MalformedResponse(
                    f"embedding has dim {vec.dim}, expected {self.config.embed_dim}"
                )
            out.append(vec)
        return out

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        _check_texts(texts)
        self._api_key()
        batches = [texts[i:i + EMBED_BATCH] for i in range(0, len(texts), EMBED_BATCH)]
        if len(batches) == 1:
            return self._embed_batch(batches[0])
        with ThreadPoolExecutor(max_workers=self.config.max_in_flight) as pool:
            results = list(pool.map(self._embed_batch, batches))
        return [v for batch in results for v in batch]

