"""Chat-completion gateway: provider abstraction, disk cache, retries, bounded concurrency."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Mapping, Protocol

logger = logging.getLogger(__name__)

API_KEY_ENV = "MINIBAR_API_KEY"
BACKOFF_SECONDS = (1.0, 2.0, 4.0)
DEFAULT_TIMEOUT = 60.0


class ProviderError(RuntimeError):
    pass


class TransportError(ProviderError):
    """Transient failure talking to the provider; retried."""


class RateLimited(TransportError):
    def __init__(self, message: str = "rate limited", retry_after: float | None = None):
        super().__init__(message)
        self.retry_after = retry_after


class ProviderUnavailable(ProviderError):
    pass


class EmptyResponse(ProviderError):
    pass


class UnscriptedPrompt(ProviderError):
    pass


@dataclass(frozen=True)
class ChatRequest:
    user: str
    model: str = "gpt-3.5-turbo"
    system: str | None = None
    temperature: float = 0.0
    max_output_tokens: int = 256

    def __post_init__(self):
        if not self.user:
            raise ValueError("ChatRequest.user must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")

    def messages(self) -> list[dict]:
        msgs = []
        if self.system:
            msgs.append({"role": "system", "content": self.system})
        msgs.append({"role": "user", "content": self.user})
        return msgs


@dataclass(frozen=True)
class ChatResponse:
    text: str
    provider: str
    cached: bool = False


@dataclass(frozen=True)
class CacheKey:
    digest: str

    def path(self, cache_dir: Path) -> Path:
        return cache_dir / self.digest[:2] / f"{self.digest}.json"


def digest_of(*parts) -> str:
    payload = json.dumps(list(parts), ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def cache_key(req: ChatRequest, provider_id: str) -> CacheKey:
    # max_output_tokens is deliberately not part of the key
    return CacheKey(digest_of("chat", provider_id, req.model, repr(float(req.temperature)),
                              req.system, req.user))


class Provider(Protocol):
    id: str

    def complete(self, req: ChatRequest) -> str: ...


class DiskCache:
    """Content-addressed JSON store, one file per key.

    Entries whose stored digest does not match their key, or that fail to
    parse, read as misses.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def get(self, key: CacheKey) -> dict | None:
        path = key.path(self.root)
        try:
            entry = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None
        except (OSError, ValueError):
            logger.warning("unreadable cache entry %s, treating as miss", path)
            return None
        if not isinstance(entry, dict) or entry.get("digest") != key.digest:
            logger.warning("cache entry %s failed digest check, treating as miss", path)
            return None
        return entry

    def put(self, key: CacheKey, entry: dict) -> None:
        path = key.path(self.root)
        path.parent.mkdir(parents=True, exist_ok=True)
        entry = {"digest": key.digest, **entry}
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".json")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(entry, fh, ensure_ascii=False, sort_keys=True, indent=1)
            os.replace(tmp, path)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise


class MockProvider:
    """Scripted provider for tests and offline runs.

    ``script`` maps prompt substrings to responses; the first rule (in
    insertion order) whose key occurs in the prompt wins. Unmatched prompts go
    to ``responder`` if given, else ``default``; with neither, the prompt is
    rejected with :class:`UnscriptedPrompt`.
    """

    def __init__(
        self,
        script: Mapping[str, str] | None = None,
        default: str | None = None,
        *,
        responder: Callable[[ChatRequest], str] | None = None,
        fail_first: int = 0,
        fail_with: type[Exception] = TransportError,
        delay: float = 0.0,
        id: str = "mock",
    ):
        self.id = id
        self.script = dict(script or {})
        self.default = default
        self.responder = responder
        self.fail_first = fail_first
        self.fail_with = fail_with
        self.delay = delay
        self.calls: list[ChatRequest] = []
        self._lock = threading.Lock()
        self._active = 0
        self.max_active = 0

    def complete(self, req: ChatRequest) -> str:
        with self._lock:
            self.calls.append(req)
            self._active += 1
            self.max_active = max(self.max_active, self._active)
            failing = self.fail_first > 0
            if failing:
                self.fail_first -= 1
        try:
            if self.delay:
                time.sleep(self.delay)
            if failing:
                raise self.fail_with("scripted failure")
            for needle, answer in self.script.items():
                if needle in req.user:
                    return answer
            if self.responder is not None:
                return self.responder(req)
            if self.default is not None:
                return self.default
            raise UnscriptedPrompt(f"no scripted response for prompt: {req.user[:80]!r}")
        finally:
            with self._lock:
                self._active -= 1


def mock_provider(script: Mapping[str, str], default: str | None = None, **kw) -> MockProvider:
    return MockProvider(script, default, **kw)


class RemoteProvider:
    """Any endpoint speaking the chat-completions wire format."""

    def __init__(self, url: str, api_key: str | None = None, timeout: float = DEFAULT_TIMEOUT,
                 id: str | None = None, client=None):
        import httpx

        self.url = url
        self.id = id or f"remote:{url}"
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        if not self.api_key:
            raise ProviderError(f"environment variable {API_KEY_ENV} is not set")
        self._client = client or httpx.Client(timeout=timeout)

    def complete(self, req: ChatRequest) -> str:
        import httpx

        body = {
            "model": req.model,
            "messages": req.messages(),
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        }
        headers = {"Authorization": f"Bearer {self.api_key}"}
        try:
            resp = self._client.post(self.url, json=body, headers=headers)
        except httpx.HTTPError as exc:
            raise TransportError(str(exc)) from exc
        if resp.status_code == 429:
            raise RateLimited(retry_after=_retry_after(resp.headers.get("retry-after")))
        if resp.status_code >= 500:
            raise TransportError(f"provider returned HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise ProviderError(f"provider rejected request: HTTP {resp.status_code} {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed chat-completions response: {exc}") from exc


def _retry_after(value: str | None) -> float | None:
    if value is None:
        return None
    try:
        return max(0.0, float(value))
    except ValueError:
        return None


@dataclass
class GatewayStats:
    requests: int = 0
    provider_calls: int = 0
    cache_hits: int = 0
    retries: int = 0


class Gateway:
    """Front door for every chat completion made by the pipeline.

    Thread-safe. At most ``max_in_flight`` provider calls run at once, and
    concurrent requests for the same key share one provider call.
    """

    def __init__(
        self,
        provider: Provider,
        cache_dir: str | Path | None = None,
        *,
        max_in_flight: int = 4,
        backoff: tuple[float, ...] = BACKOFF_SECONDS,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        self.provider = provider
        self.cache = DiskCache(cache_dir) if cache_dir is not None else None
        self.max_in_flight = max_in_flight
        self.backoff = tuple(backoff)
        self.sleep = sleep
        self.stats = GatewayStats()
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._stats_lock = threading.Lock()
        self._key_locks: dict[str, threading.Lock] = {}
        self._key_locks_guard = threading.Lock()
        self._memo: dict[str, str] = {}

    def _count(self, name: str) -> None:
        with self._stats_lock:
            setattr(self.stats, name, getattr(self.stats, name) + 1)

    def _lock_for(self, digest: str) -> threading.Lock:
        with self._key_locks_guard:
            return self._key_locks.setdefault(digest, threading.Lock())

    def complete(self, req: ChatRequest) -> ChatResponse:
        self._count("requests")
        key = cache_key(req, self.provider.id)
        with self._lock_for(key.digest):
            hit = self._lookup(key)
            if hit is not None:
                self._count("cache_hits")
                return ChatResponse(hit, self.provider.id, cached=True)
            text = self._call_with_retries(req)
            self._store(key, req, text)
        return ChatResponse(text, self.provider.id, cached=False)

    def _lookup(self, key: CacheKey) -> str | None:
        if self.cache is None:
            return self._memo.get(key.digest)
        entry = self.cache.get(key)
        if entry is None:
            return None
        text = entry.get("response", {}).get("text")
        return text if isinstance(text, str) and text else None

    def _store(self, key: CacheKey, req: ChatRequest, text: str) -> None:
        if self.cache is None:
            self._memo[key.digest] = text
            return
        self.cache.put(key, {
            "provider": self.provider.id,
            "request": asdict(req),
            "response": {"text": text},
        })

    def _call_with_retries(self, req: ChatRequest) -> str:
        attempt = 0
        while True:
            try:
                with self._slots:
                    self._count("provider_calls")
                    text = self.provider.complete(req)
                break
            except TransportError as exc:
                if attempt >= len(self.backoff):
                    raise ProviderUnavailable(
                        f"{self.provider.id}: giving up after {attempt} retries: {exc}"
                    ) from exc
                delay = self.backoff[attempt]
                if isinstance(exc, RateLimited) and exc.retry_after is not None:
                    delay = exc.retry_after
                attempt += 1
                self._count("retries")
                logger.info("%s: %s; retry %d in %.1fs", self.provider.id, exc, attempt, delay)
                self.sleep(delay)
        if not text or not text.strip():
            raise EmptyResponse(f"{self.provider.id} returned an empty completion")
        return text
