"""Judge invocation backends: remote chat API, replay store, scripted oracle.

All three speak the same ``complete(request)`` interface so the pipeline
never knows which one it drives. The remote backend talks the common
chat-completion wire protocol (POST ``{"model", "messages", "temperature",
"max_tokens"}``, read ``choices[0].message.content``) with a bearer token
taken from an environment variable, caches every success, and retries
transient failures with exponential backoff. The replay backend serves the
same cache without any network. The scripted backend returns registered
fixtures and exists for tests and offline calibration of the harness
itself.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping

import requests

from gqajudge.errors import (
    AuthError,
    CacheMissError,
    MissingFixtureError,
    TransientBackendError,
)

DEFAULT_MAX_OUTPUT_TOKENS = 1024
DEFAULT_TIMEOUT_SECONDS = 120.0


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    base_backoff_ms: int = 1000


@dataclass(frozen=True)
class CompletionRequest:
    """One judge call. Greedy decoding (temperature 0) is the default everywhere."""

    model_id: str
    prompt: str
    temperature: float = 0.0
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS
    request_tag: str = ""


@dataclass(frozen=True)
class CompletionResult:
    text: str
    attempts: int = 1
    from_cache: bool = False


@dataclass(frozen=True)
class BackendConfig:
    kind: str  # "remote_chat" | "replay" | "scripted"
    model_id: str = "scripted-judge"
    endpoint_url: str | None = None
    api_key_env: str | None = None
    cache_dir: str | None = None
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    temperature: float = 0.0
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS
    fixtures: Mapping[str, str] | None = None
    fixtures_path: str | None = None
    timeout_seconds: float = DEFAULT_TIMEOUT_SECONDS

    def validate(self) -> None:
        if self.kind == "remote_chat":
            if not self.endpoint_url or not self.api_key_env:
                raise ValueError("remote_chat backend requires endpoint_url and api_key_env")
        elif self.kind == "replay":
            if not self.cache_dir:
                raise ValueError("replay backend requires cache_dir")
        elif self.kind == "scripted":
            if self.fixtures is None and self.fixtures_path is None:
                raise ValueError("scripted backend requires fixtures or fixtures_path")
        else:
            raise ValueError(f"unknown backend kind {self.kind!r}")


def cache_key(request: CompletionRequest) -> str:
    """Collision-resistant digest identifying a request's cacheable content.

    The request_tag is deliberately excluded so identical prompts share one
    cache entry regardless of which sample/call produced them.
    """
    payload = "\x1f".join(
        [
            request.model_id,
            repr(float(request.temperature)),
            str(int(request.max_output_tokens)),
            request.prompt,
        ]
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ResponseCache:
    """One file per key; atomic writes so a killed run never leaves a torn entry."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.directory / key

    def get(self, key: str) -> str | None:
        path = self._path(key)
        try:
            entry = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None
        except (json.JSONDecodeError, OSError):
            return None
        return entry.get("response")

    def put(self, key: str, model_id: str, response: str) -> None:
        entry = {
            "model_id": model_id,
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "response": response,
        }
        fd, tmp_name = tempfile.mkstemp(dir=self.directory, prefix=".tmp-")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as handle:
                json.dump(entry, handle, ensure_ascii=False)
            os.replace(tmp_name, self._path(key))
        except BaseException:
            try:
                os.unlink(tmp_name)
            except FileNotFoundError:
                pass
            raise


class Backend:
    """Shared counters; concrete backends implement ``complete``."""

    def __init__(self, config: BackendConfig):
        self.config = config
        self._lock = threading.Lock()
        self.network_calls = 0
        self.completed_tags: list[str] = []

    @property
    def model_id(self) -> str:
        return self.config.model_id

    def _record(self, tag: str, network: bool) -> None:
        with self._lock:
            self.completed_tags.append(tag)
            if network:
                self.network_calls += 1

    def complete(self, request: CompletionRequest) -> CompletionResult:
        raise NotImplementedError


class ScriptedBackend(Backend):
    """Returns the fixture registered for the request tag; zero network."""

    def __init__(self, config: BackendConfig):
        super().__init__(config)
        fixtures: dict[str, str] = {}
        if config.fixtures_path:
            fixtures.update(json.loads(Path(config.fixtures_path).read_text(encoding="utf-8")))
        if config.fixtures:
            fixtures.update(config.fixtures)
        self.fixtures = fixtures

    def complete(self, request: CompletionRequest) -> CompletionResult:
        try:
            text = self.fixtures[request.request_tag]
        except KeyError:
            raise MissingFixtureError(request.request_tag) from None
        self._record(request.request_tag, network=False)
        return CompletionResult(text=text, attempts=1)


class ReplayBackend(Backend):
    """Serves a previously populated cache; never performs network operations."""

    def __init__(self, config: BackendConfig):
        super().__init__(config)
        self.cache = ResponseCache(config.cache_dir)

    def complete(self, request: CompletionRequest) -> CompletionResult:
        key = cache_key(request)
        text = self.cache.get(key)
        if text is None:
            raise CacheMissError(key)
        self._record(request.request_tag, network=False)
        return CompletionResult(text=text, attempts=1, from_cache=True)


class RemoteChatBackend(Backend):
    """Hosted chat-completion API with read-through caching and retry."""

    def __init__(self, config: BackendConfig, session: requests.Session | None = None):
        super().__init__(config)
        self.cache = ResponseCache(config.cache_dir) if config.cache_dir else None
        self.session = session or requests.Session()

    def _api_key(self) -> str:
        key = os.environ.get(self.config.api_key_env or "", "")
        if not key:
            raise AuthError(f"environment variable {self.config.api_key_env!r} is empty or unset")
        return key

    def _post_once(self, request: CompletionRequest) -> str:
        body = {
            "model": request.model_id,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        try:
            response = self.session.post(
                self.config.endpoint_url,
                json=body,
                headers={"Authorization": f"Bearer {self._api_key()}"},
                timeout=self.config.timeout_seconds,
            )
        except requests.RequestException as exc:
            raise TransientBackendError(f"request failed: {exc}") from exc
        if response.status_code in (401, 403):
            raise AuthError(f"HTTP {response.status_code} from {self.config.endpoint_url}")
        if response.status_code == 429 or response.status_code >= 500:
            raise TransientBackendError(f"HTTP {response.status_code} from {self.config.endpoint_url}")
        if response.status_code != 200:
            raise TransientBackendError(
                f"unexpected HTTP {response.status_code} from {self.config.endpoint_url}"
            )
        try:
            payload = response.json()
            return payload["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransientBackendError(f"malformed completion payload: {exc}") from exc

    def complete(self, request: CompletionRequest) -> CompletionResult:
        key = cache_key(request)
        if self.cache is not None:
            cached = self.cache.get(key)
            if cached is not None:
                self._record(request.request_tag, network=False)
                return CompletionResult(text=cached, attempts=0, from_cache=True)

        retry = self.config.retry
        last_error: TransientBackendError | None = None
        for attempt in range(1, retry.max_attempts + 1):
            try:
                with self._lock:
                    self.network_calls += 1
                text = self._post_once(request)
            except TransientBackendError as exc:
                last_error = exc
                if attempt < retry.max_attempts:
                    time.sleep(retry.base_backoff_ms / 1000.0 * 2 ** (attempt - 1))
                continue
            if self.cache is not None:
                self.cache.put(key, request.model_id, text)
            with self._lock:
                self.completed_tags.append(request.request_tag)
            return CompletionResult(text=text, attempts=attempt)
        raise last_error  # retry budget exhausted


def make_backend(config: BackendConfig) -> Backend:
    config.validate()
    if config.kind == "scripted":
        return ScriptedBackend(config)
    if config.kind == "replay":
        return ReplayBackend(config)
    return RemoteChatBackend(config)


def complete(request: CompletionRequest, config: BackendConfig) -> str:
    """One-shot convenience wrapper; long runs should reuse a Backend."""
    return make_backend(config).complete(request).text
