"""Provider-agnostic chat-completion gateway.

One interface over multiple chat APIs with a strict per-minute rate cap,
exponential backoff on transient failures, a concurrency bound, and a
persistent response cache keyed by a content digest of the request. A
scripted provider answers from a fixture directory, which keeps the whole
pipeline runnable offline and byte-deterministic.

The rate limiter enforces the cap over *any* sliding 60-second window (a
naive refill bucket can emit nearly twice the cap in its first window), so
it keeps a log of recent send times rather than a token count.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Protocol

from .errors import ConfigurationError, TransportError

DEFAULT_TEMPERATURE_BAND = (0.0, 0.1)


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    system_message: str
    user_message: str
    temperature: float = 0.0
    max_output_tokens: Optional[int] = None
    attempt_number: int = 1

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 1.0:
            raise ValueError(f"temperature {self.temperature} outside [0, 1]")
        if self.attempt_number < 1:
            raise ValueError("attempt_number must be >= 1")


@dataclass
class ChatResponse:
    text: str
    model_id: str
    from_cache: bool
    latency_ms: int
    token_usage: Optional[dict] = None


@dataclass(frozen=True)
class BackoffPolicy:
    base_delay_ms: int = 500
    multiplier: float = 2.0
    max_retries: int = 3
    jitter: float = 0.1

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if not 0.0 <= self.jitter < 1.0:
            raise ValueError("jitter fraction must be in [0, 1)")

    def delays_ms(self) -> list[float]:
        return [self.base_delay_ms * self.multiplier ** i for i in range(self.max_retries)]


@dataclass(frozen=True)
class ProviderConfig:
    provider_name: str
    endpoint: str = ""
    credential_env: str = ""
    requests_per_minute: int = 60
    max_concurrent: int = 4
    backoff: BackoffPolicy = field(default_factory=BackoffPolicy)
    fixture_dir: str = ""
    models: tuple[str, ...] = ()

    def __post_init__(self):
        if self.requests_per_minute <= 0:
            raise ValueError("requests_per_minute must be > 0")
        if self.max_concurrent <= 0:
            raise ValueError("max_concurrent must be > 0")


def cache_key(request: ChatRequest) -> str:
    """Stable content digest; attempt_number participates so retries are cache-distinct."""
    payload = json.dumps(
        {
            "model_id": request.model_id,
            "system_message": request.system_message,
            "user_message": request.user_message,
            "temperature": request.temperature,
            "attempt_number": request.attempt_number,
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ResponseCache(Protocol):
    def cache_get(self, digest: str) -> Optional[str]: ...
    def cache_put(self, digest: str, model_id: str, text: str) -> None: ...


class MemoryCache:
    """Dict-backed cache for tests and cache-less runs."""

    def __init__(self):
        self._data: dict[str, str] = {}
        self._lock = threading.Lock()

    def cache_get(self, digest: str) -> Optional[str]:
        with self._lock:
            return self._data.get(digest)

    def cache_put(self, digest: str, model_id: str, text: str) -> None:
        with self._lock:
            self._data.setdefault(digest, text)


class RateLimiter:
    """Blocks so that at most `requests_per_minute` acquisitions occur in any 60s window."""

    def __init__(self, requests_per_minute: int,
                 clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        if requests_per_minute <= 0:
            raise ValueError("requests_per_minute must be > 0")
        self.limit = requests_per_minute
        self._clock = clock
        self._sleep = sleep
        self._sent: deque[float] = deque()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                while self._sent and now - self._sent[0] >= 60.0:
                    self._sent.popleft()
                if len(self._sent) < self.limit:
                    self._sent.append(now)
                    return
                wait = 60.0 - (now - self._sent[0])
            self._sleep(max(wait, 1e-4))


class ChatProvider(Protocol):
    def complete(self, request: ChatRequest) -> str: ...


class ScriptedProvider:
    """Deterministic provider reading digest-named response files from a directory."""

    def __init__(self, fixture_dir: str | Path):
        self.fixture_dir = Path(fixture_dir)

    def complete(self, request: ChatRequest) -> str:
        path = self.fixture_dir / f"{cache_key(request)}.txt"
        if not path.exists():
            raise ConfigurationError(
                f"no scripted fixture for digest {cache_key(request)} "
                f"(model {request.model_id}, attempt {request.attempt_number}) "
                f"under {self.fixture_dir}"
            )
        return path.read_text(encoding="utf-8")


class HttpProvider:
    """Base for real chat APIs; subclasses shape the wire JSON."""

    def __init__(self, config: ProviderConfig, timeout: float = 120.0):
        self.config = config
        self.timeout = timeout

    def _credential(self) -> str:
        name = self.config.credential_env
        if not name:
            raise ConfigurationError(
                f"provider {self.config.provider_name!r} has no credential_env configured"
            )
        value = os.environ.get(name)
        if not value:
            raise ConfigurationError(
                f"environment variable {name} (credential for "
                f"{self.config.provider_name}) is not set"
            )
        return value

    def build_payload(self, request: ChatRequest) -> dict:
        raise NotImplementedError

    def build_headers(self, credential: str) -> dict:
        raise NotImplementedError

    def parse_text(self, data: dict) -> str:
        raise NotImplementedError

    def complete(self, request: ChatRequest) -> str:
        import requests as _requests

        credential = self._credential()
        try:
            resp = _requests.post(
                self.config.endpoint,
                json=self.build_payload(request),
                headers=self.build_headers(credential),
                timeout=self.timeout,
            )
        except _requests.RequestException as exc:
            raise TransportError(f"{self.config.provider_name}: {exc}")
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransportError(
                f"{self.config.provider_name}: HTTP {resp.status_code}: {resp.text[:200]}"
            )
        if resp.status_code != 200:
            raise ConfigurationError(
                f"{self.config.provider_name}: HTTP {resp.status_code}: {resp.text[:200]}"
            )
        try:
            return self.parse_text(resp.json())
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"{self.config.provider_name}: malformed response: {exc}")


class OpenAIProvider(HttpProvider):
    def build_payload(self, request: ChatRequest) -> dict:
        payload = {
            "model": request.model_id,
            "temperature": request.temperature,
            "messages": [
                {"role": "system", "content": request.system_message},
                {"role": "user", "content": request.user_message},
            ],
        }
        if request.max_output_tokens is not None:
            payload["max_tokens"] = request.max_output_tokens
        return payload

    def build_headers(self, credential: str) -> dict:
        return {"Authorization": f"Bearer {credential}"}

    def parse_text(self, data: dict) -> str:
        return data["choices"][0]["message"]["content"]


class AnthropicProvider(HttpProvider):
    def build_payload(self, request: ChatRequest) -> dict:
        return {
            "model": request.model_id,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens or 4096,
            "system": request.system_message,
            "messages": [{"role": "user", "content": request.user_message}],
        }

    def build_headers(self, credential: str) -> dict:
        return {"x-api-key": credential, "anthropic-version": "2023-06-01"}

    def parse_text(self, data: dict) -> str:
        return data["content"][0]["text"]


class GeminiProvider(HttpProvider):
    def build_payload(self, request: ChatRequest) -> dict:
        generation: dict = {"temperature": request.temperature}
        if request.max_output_tokens is not None:
            generation["maxOutputTokens"] = request.max_output_tokens
        return {
            "systemInstruction": {"parts": [{"text": request.system_message}]},
            "contents": [{"role": "user", "parts": [{"text": request.user_message}]}],
            "generationConfig": generation,
        }

    def build_headers(self, credential: str) -> dict:
        return {"x-goog-api-key": credential}

    def parse_text(self, data: dict) -> str:
        return data["candidates"][0]["content"]["parts"][0]["text"]


_PROVIDER_TYPES = {
    "openai": OpenAIProvider,
    "anthropic": AnthropicProvider,
    "gemini": GeminiProvider,
}


def make_provider(config: ProviderConfig) -> ChatProvider:
    if config.provider_name == "scripted":
        if not config.fixture_dir:
            raise ConfigurationError("scripted provider requires fixture_dir")
        return ScriptedProvider(config.fixture_dir)
    try:
        cls = _PROVIDER_TYPES[config.provider_name]
    except KeyError:
        raise ConfigurationError(f"unknown provider {config.provider_name!r}")
    return cls(config)


class ChatGateway:
    """send() with caching, rate limiting, bounded concurrency, and backoff."""

    def __init__(self, provider: ChatProvider, config: ProviderConfig,
                 cache: Optional[ResponseCache] = None,
                 temperature_band: tuple[float, float] = DEFAULT_TEMPERATURE_BAND,
                 clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep,
                 rng: Optional[random.Random] = None):
        self.provider = provider
        self.config = config
        self.cache = cache if cache is not None else MemoryCache()
        self.temperature_band = temperature_band
        self._clock = clock
        self._sleep = sleep
        self._rng = rng if rng is not None else random.Random()
        self._limiter = RateLimiter(config.requests_per_minute, clock=clock, sleep=sleep)
        self._inflight = threading.BoundedSemaphore(config.max_concurrent)

    def send(self, request: ChatRequest) -> ChatResponse:
        lo, hi = self.temperature_band
        if not lo <= request.temperature <= hi:
            raise ConfigurationError(
                f"temperature {request.temperature} outside configured band [{lo}, {hi}]"
            )
        digest = cache_key(request)
        cached = self.cache.cache_get(digest)
        if cached is not None:
            return ChatResponse(
                text=cached, model_id=request.model_id, from_cache=True, latency_ms=0
            )

        policy = self.config.backoff
        delays = policy.delays_ms()
        started = self._clock()
        attempts = 0
        while True:
            attempts += 1
            self._limiter.acquire()
            try:
                with self._inflight:
                    text = self.provider.complete(request)
                break
            except TransportError as exc:
                if attempts > policy.max_retries:
                    raise TransportError(
                        f"exhausted retries for {request.model_id}: {exc}",
                        attempts=attempts,
                    )
                delay_ms = delays[attempts - 1]
                jittered = delay_ms * (1.0 + self._rng.uniform(-policy.jitter, policy.jitter))
                self._sleep(jittered / 1000.0)
        latency_ms = int((self._clock() - started) * 1000)
        self.cache.cache_put(digest, request.model_id, text)
        return ChatResponse(
            text=text, model_id=request.model_id, from_cache=False, latency_ms=latency_ms
        )


def load_provider_configs(path: str | Path) -> dict[str, ProviderConfig]:
    """Read provider sections from an INI file.

    Sections are named ``provider:<name>``; recognized keys: endpoint,
    credential_env, requests_per_minute, max_concurrent, fixture_dir, models
    (comma-separated), and backoff_* (base_delay_ms, multiplier, max_retries,
    jitter). API keys stay in the environment; the file only names variables.
    """
    import configparser

    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigurationError(f"cannot read config file {path}")
    configs: dict[str, ProviderConfig] = {}
    for section in parser.sections():
        if not section.startswith("provider:"):
            continue
        name = section.split(":", 1)[1]
        sec = parser[section]
        backoff = BackoffPolicy(
            base_delay_ms=sec.getint("backoff_base_delay_ms", 500),
            multiplier=sec.getfloat("backoff_multiplier", 2.0),
            max_retries=sec.getint("backoff_max_retries", 3),
            jitter=sec.getfloat("backoff_jitter", 0.1),
        )
        models = tuple(
            m.strip() for m in sec.get("models", "").split(",") if m.strip()
        )
        configs[name] = ProviderConfig(
            provider_name=name,
            endpoint=sec.get("endpoint", ""),
            credential_env=sec.get("credential_env", ""),
            requests_per_minute=sec.getint("requests_per_minute", 60),
            max_concurrent=sec.getint("max_concurrent", 4),
            backoff=backoff,
            fixture_dir=sec.get("fixture_dir", ""),
            models=models,
        )
    return configs


def scripted_config(fixture_dir: str | Path, requests_per_minute: int = 100000) -> ProviderConfig:
    """Config for the offline scripted provider (no credentials, no effective cap)."""
    return ProviderConfig(
        provider_name="scripted",
        requests_per_minute=requests_per_minute,
        max_concurrent=16,
        fixture_dir=str(fixture_dir),
    )
