"""LLM backend abstraction: remote OpenAI-compatible client, deterministic
scripted backend for hermetic tests, and a persistent response cache."""
from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

from .errors import (BackendUnavailable, ContextOverflow, RateLimited,
                     ScriptExhausted)


class Role(Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


@dataclass(frozen=True)
class ChatMessage:
    role: Role
    content: str

    def __post_init__(self):
        if self.role is Role.USER and not self.content.strip():
            raise ValueError("user messages must be non-empty")


@dataclass(frozen=True)
class GenerationParams:
    model: str = "default"
    temperature: float = 0.0
    max_tokens: int = 2048
    seed: Optional[int] = None

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")


@dataclass
class ChatExchange:
    messages: list
    params: GenerationParams
    response: str  # recorded verbatim
    latency: float
    backend_id: str


def canonical_request(messages, params: GenerationParams) -> str:
    """Stable JSON form of a request; injective on (messages, model,
    temperature, max_tokens, seed)."""
    return json.dumps({
        "messages": [{"role": m.role.value, "content": m.content}
                     for m in messages],
        "model": params.model,
        "temperature": params.temperature,
        "max_tokens": params.max_tokens,
        "seed": params.seed,
    }, sort_keys=True, ensure_ascii=False)


def request_key(messages, params: GenerationParams) -> str:
    return hashlib.sha256(
        canonical_request(messages, params).encode("utf-8")).hexdigest()


class Backend:
    """Interface every LLM backend implements."""

    backend_id = "base"

    def __init__(self):
        self.exchanges: list = []
        self.call_count = 0

    def complete(self, messages, params: GenerationParams) -> str:
        if not messages:
            raise ValueError("messages must be non-empty")
        if messages[-1].role is not Role.USER:
            raise ValueError("last message must have role User")
        start = time.monotonic()
        reply = self._complete(messages, params)
        self.call_count += 1
        self.exchanges.append(ChatExchange(
            messages=list(messages), params=params, response=reply,
            latency=time.monotonic() - start, backend_id=self.backend_id))
        return reply

    def _complete(self, messages, params):  # pragma: no cover - abstract
        raise NotImplementedError


class OpenAICompatibleBackend(Backend):
    """Client for any server speaking the OpenAI chat-completions dialect
    (including local inference servers). Retries 429/5xx/transport errors
    with exponential backoff."""

    def __init__(self, base_url: str = "https://api.openai.com/v1",
                 api_key_env: str = "OPENAI_API_KEY",
                 backend_id: str = "openai",
                 max_retries: int = 3,
                 backoff_base: float = 1.0,
                 backoff_cap: float = 30.0,
                 timeout: float = 120.0,
                 sleep: Callable[[float], None] = time.sleep,
                 session=None):
        super().__init__()
        self.base_url = base_url.rstrip("/")
        self.api_key = os.environ.get(api_key_env, "")
        self.backend_id = backend_id
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self.timeout = timeout
        self._sleep = sleep
        if session is None:
            import requests
            session = requests.Session()
        self._session = session

    def _complete(self, messages, params):
        body = {
            "model": params.model,
            "messages": [{"role": m.role.value, "content": m.content}
                         for m in messages],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        }
        if params.seed is not None:
            body["seed"] = params.seed
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        last_error = None
        for attempt in range(self.max_retries):
            if attempt:
                self._sleep(min(self.backoff_base * 2 ** (attempt - 1),
                                self.backoff_cap))
            try:
                resp = self._session.post(
                    f"{self.base_url}/chat/completions",
                    json=body, headers=headers, timeout=self.timeout)
            except Exception as exc:  # transport-level failure
                last_error = BackendUnavailable(str(exc))
                continue
            if resp.status_code == 429:
                last_error = RateLimited(f"HTTP 429: {resp.text[:200]}")
                continue
            if resp.status_code >= 500:
                last_error = BackendUnavailable(
                    f"HTTP {resp.status_code}: {resp.text[:200]}")
                continue
            if resp.status_code == 400 and "context" in resp.text.lower():
                raise ContextOverflow(resp.text[:500])
            if resp.status_code >= 400:
                raise BackendUnavailable(
                    f"HTTP {resp.status_code}: {resp.text[:500]}")
            data = resp.json()
            return data["choices"][0]["message"]["content"]
        raise last_error


class ScriptedBackend(Backend):
    """Deterministic backend replaying a prepared script.

    Two modes:
      * ordered  -- a list of replies consumed in call order
                    (single-consumer; exhausting it raises ScriptExhausted)
      * by_key   -- replies keyed by the SHA-256 of the canonical request,
                    answerable in any order
    """

    def __init__(self, replies: Optional[list] = None,
                 by_key: Optional[dict] = None,
                 backend_id: str = "scripted"):
        super().__init__()
        if (replies is None) == (by_key is None):
            raise ValueError("provide exactly one of replies / by_key")
        self._replies = list(replies) if replies is not None else None
        self._by_key = dict(by_key) if by_key is not None else None
        self._cursor = 0
        self.backend_id = backend_id
        self._lock = threading.Lock()

    @property
    def ordered(self) -> bool:
        return self._replies is not None

    def _complete(self, messages, params):
        if self._by_key is not None:
            key = request_key(messages, params)
            try:
                return self._by_key[key]
            except KeyError:
                raise ScriptExhausted(f"no scripted reply for request {key}")
        with self._lock:
            if self._cursor >= len(self._replies):
                raise ScriptExhausted(
                    f"script of {len(self._replies)} replies exhausted")
            reply = self._replies[self._cursor]
            self._cursor += 1
            return reply


@dataclass
class CacheEntry:
    key: str
    request: str
    response: str
    model: str
    timestamp: float


class ResponseCache:
    """Append-only on-disk cache, one JSON object per line. Writes are
    serialized; reads after insertion are lock-free."""

    def __init__(self, path):
        self.path = str(path)
        self._mem: dict = {}
        self._lock = threading.Lock()
        if os.path.exists(self.path):
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    obj = json.loads(line)
                    self._mem[obj["key"]] = obj["response"]

    def get(self, key: str) -> Optional[str]:
        return self._mem.get(key)

    def put(self, key: str, request: str, response: str, model: str) -> None:
        with self._lock:
            if key in self._mem:
                return
            self._mem[key] = response
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps({
                    "key": key, "request": request, "response": response,
                    "model": model, "timestamp": time.time(),
                }, ensure_ascii=False) + "\n")


class CachedBackend(Backend):
    """Wraps another backend with a persistent cache: a repeated identical
    request returns the stored reply without touching the inner backend."""

    def __init__(self, inner: Backend, cache: ResponseCache):
        super().__init__()
        self.inner = inner
        self.cache = cache
        self.backend_id = f"cached({inner.backend_id})"

    def _complete(self, messages, params):
        key = request_key(messages, params)
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        reply = self.inner.complete(messages, params)
        self.cache.put(key, canonical_request(messages, params), reply,
                       params.model)
        return reply
