"""Completion backends: a chat-completion HTTP client and a deterministic stub.

Both share the same retry/backoff and concurrency-limit machinery, so fault
injection against the stub exercises the exact code path the HTTP backend
uses. Requests default to temperature 0; with a deterministic backend the
gateway is then a pure function of the prompt.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import threading
import time
from collections import deque
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable, Mapping

import requests

from .errors import SciConceptError

log = logging.getLogger(__name__)


class GatewayError(SciConceptError):
    """Base class for completion backend failures."""


class TransportError(GatewayError):
    """The endpoint could not be reached or kept failing."""


class RateLimited(GatewayError):
    """The endpoint kept answering 429 past the retry budget."""


class BadResponse(GatewayError):
    """The endpoint answered, but the payload is unusable."""


class AuthError(GatewayError):
    """The endpoint rejected our credentials."""


@dataclass(frozen=True)
class CompletionRequest:
    """One prompt to complete; temperature defaults to 0 for reproducibility."""

    prompt: str
    max_tokens: int = 512
    temperature: float = 0.0
    stop_sequences: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.prompt:
            raise ValueError("empty prompt")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")


@dataclass(frozen=True)
class CompletionResult:
    """Completion text plus client-observed wall-clock latency in seconds."""

    text: str
    latency: float = 0.0
    prompt_tokens: int | None = None
    completion_tokens: int | None = None


@dataclass(frozen=True)
class BackendConfig:
    """Connection settings; the auth token is read from the named env var."""

    endpoint_url: str
    model_name: str
    auth_token_env: str = "LLM_API_TOKEN"
    timeout: float = 30.0
    max_retries: int = 3
    max_in_flight: int = 4
    backoff_base: float = 0.5
    raw_completion: bool = False

    def __post_init__(self) -> None:
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")


class _Retryable(Exception):
    """Internal marker wrapping the error to surface if retries run out."""

    def __init__(self, error: GatewayError):
        self.error = error


class Backend:
    """Shared retry, backoff and in-flight limiting around a single attempt."""

    def __init__(self, config: BackendConfig):
        self.config = config
        self._limiter = threading.BoundedSemaphore(config.max_in_flight)
        self._rng = random.Random()
        self._sleep: Callable[[float], None] = time.sleep

    def _attempt(self, request: CompletionRequest) -> CompletionResult:
        raise NotImplementedError

    def _backoff(self, attempt: int) -> float:
        # Jitter multiplies within [1, 1.25), so delays stay monotonic per attempt.
        return self.config.backoff_base * (2**attempt) * (1 + self._rng.uniform(0, 0.25))

    def complete(self, request: CompletionRequest) -> CompletionResult:
        start = time.perf_counter()
        with self._limiter:
            attempt = 0
            while True:
                try:
                    result = self._attempt(request)
                    break
                except _Retryable as exc:
                    if attempt >= self.config.max_retries:
                        raise exc.error from None
                    delay = self._backoff(attempt)
                    log.debug("retrying after %.2fs: %s", delay, exc.error)
                    self._sleep(delay)
                    attempt += 1
        return replace(result, latency=time.perf_counter() - start)


def complete(request: CompletionRequest, backend: Backend) -> CompletionResult:
    """Run one completion through a backend (retries and limits included)."""
    return backend.complete(request)


class HttpBackend(Backend):
    """Chat-completion HTTP client in the de-facto ``/v1/chat/completions`` shape.

    A raw-completion variant (``prompt`` field against ``/v1/completions``) is
    available via ``BackendConfig.raw_completion``. Timeouts, 429 and 5xx are
    retried with exponential backoff and jitter; 401/403 fail immediately.
    """

    def __init__(self, config: BackendConfig):
        super().__init__(config)
        self._url = self._resolve_url(config)

    @staticmethod
    def _resolve_url(config: BackendConfig) -> str:
        url = config.endpoint_url.rstrip("/")
        if url.endswith("completions"):
            return url
        return url + ("/v1/completions" if config.raw_completion else "/v1/chat/completions")

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.config.auth_token_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def _payload(self, request: CompletionRequest) -> dict:
        payload: dict = {
            "model": self.config.model_name,
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
        }
        if request.stop_sequences:
            payload["stop"] = list(request.stop_sequences)
        if self.config.raw_completion:
            payload["prompt"] = request.prompt
        else:
            payload["messages"] = [{"role": "user", "content": request.prompt}]
        return payload

    def _attempt(self, request: CompletionRequest) -> CompletionResult:
        try:
            response = requests.post(
                self._url,
                json=self._payload(request),
                headers=self._headers(),
                timeout=self.config.timeout,
            )
        except (requests.Timeout, requests.ConnectionError) as exc:
            raise _Retryable(TransportError(f"{self._url}: {exc}")) from None
        if response.status_code in (401, 403):
            raise AuthError(f"HTTP {response.status_code} from {self._url}")
        if response.status_code == 429:
            raise _Retryable(RateLimited(f"HTTP 429 from {self._url}"))
        if response.status_code >= 500:
            raise _Retryable(TransportError(f"HTTP {response.status_code} from {self._url}"))
        if response.status_code != 200:
            raise BadResponse(f"HTTP {response.status_code} from {self._url}")
        try:
            body = response.json()
            choice = body["choices"][0]
            text = choice["text"] if self.config.raw_completion else choice["message"]["content"]
            if not isinstance(text, str):
                raise TypeError("completion text is not a string")
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BadResponse(f"malformed completion payload: {exc}") from None
        usage = body.get("usage") or {}
        return CompletionResult(
            text=text,
            prompt_tokens=usage.get("prompt_tokens"),
            completion_tokens=usage.get("completion_tokens"),
        )


def fingerprint(prompt: str) -> str:
    """Stable short hash of a prompt, used as the stub lookup key."""
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:16]


_STUB_CONFIG = BackendConfig(
    endpoint_url="stub:",
    model_name="stub",
    timeout=5.0,
    max_retries=2,
    max_in_flight=8,
    backoff_base=0.0,
)


class StubBackend(Backend):
    """Deterministic table-lookup backend for tests and offline runs.

    Responses are looked up by prompt fingerprint; unknown prompts return
    ``default`` (or raise BadResponse when ``default`` is None). ``failures``
    is a schedule of HTTP-like status codes consumed one per attempt before
    any lookup succeeds, for exercising the retry path. Instrumentation
    counters record attempts and the high-water mark of concurrent calls.
    """

    def __init__(
        self,
        table: Mapping[str, str] | None = None,
        *,
        default: str | None = "",
        failures: Iterable[int] = (),
        config: BackendConfig | None = None,
        delay: float = 0.0,
    ):
        super().__init__(config or _STUB_CONFIG)
        self.table = dict(table or {})
        self.default = default
        self._failures = deque(failures)
        self._delay = delay
        self._lock = threading.Lock()
        self.attempt_count = 0
        self.max_in_flight_seen = 0
        self._in_flight = 0

    @classmethod
    def from_file(cls, path: str | Path, **kwargs) -> "StubBackend":
        """Load a fingerprint→response table from a JSON fixture file."""
        table = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(table, dict):
            raise BadResponse(f"stub fixture {path} is not a JSON object")
        return cls(table, **kwargs)

    def set_response(self, prompt: str, text: str) -> None:
        self.table[fingerprint(prompt)] = text

    def _attempt(self, request: CompletionRequest) -> CompletionResult:
        with self._lock:
            self.attempt_count += 1
            self._in_flight += 1
            self.max_in_flight_seen = max(self.max_in_flight_seen, self._in_flight)
            failure = self._failures.popleft() if self._failures else None
        try:
            if self._delay:
                time.sleep(self._delay)
            if failure is not None:
                if failure == 429:
                    raise _Retryable(RateLimited("injected 429"))
                raise _Retryable(TransportError(f"injected {failure}"))
            key = fingerprint(request.prompt)
            if key in self.table:
                return CompletionResult(text=self.table[key])
            if self.default is None:
                raise BadResponse(f"no stub entry for fingerprint {key}")
            return CompletionResult(text=self.default)
        finally:
            with self._lock:
                self._in_flight -= 1
