"""Chat-completion client with a record/replay exchange cache.

Every request is identified by a SHA-256 over its canonical JSON encoding.
In ``replay`` mode responses come only from the cache; a miss raises
:class:`CacheMissError` and never reaches the network.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import threading
import time
from collections.abc import Callable
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Literal

import httpx

__all__ = [
    "CacheMissError",
    "CredentialError",
    "ExchangeCache",
    "ExchangeRecord",
    "Gateway",
    "GatewayConfig",
    "GatewayError",
    "HTTPStatusError",
    "LlmRequest",
    "MalformedResponseError",
    "NetworkError",
    "request_hash",
]

log = logging.getLogger(__name__)

Mode = Literal["live", "record", "replay"]
MODES: tuple[str, ...] = ("live", "record", "replay")

DEFAULT_MODEL = "gpt-4o-2024-05-13"
DEFAULT_BASE_URL = "https://api.openai.com/v1"
DEFAULT_API_KEY_ENV = "OPENAI_API_KEY"
RETRY_STATUSES = frozenset({429, 500, 502, 503, 504})


class GatewayError(RuntimeError):
    pass


class CredentialError(GatewayError):
    pass


class CacheMissError(GatewayError):
    def __init__(self, digest: str) -> None:
        super().__init__(f"no recorded exchange for request {digest[:16]}")
        self.request_hash = digest


class HTTPStatusError(GatewayError):
    def __init__(self, status: int, body: str = "") -> None:
        super().__init__(f"endpoint returned HTTP {status}: {body[:200]}")
        self.status = status


class NetworkError(GatewayError):
    pass


class MalformedResponseError(GatewayError):
    pass


@dataclass(frozen=True)
class LlmRequest:
    prompt: str
    model_name: str = DEFAULT_MODEL
    temperature: float = 0.0

    def __post_init__(self) -> None:
        if not self.prompt:
            raise ValueError("prompt is empty")
        object.__setattr__(self, "temperature", float(self.temperature))

    def canonical(self) -> bytes:
        payload = {
            "model_name": self.model_name,
            "prompt": self.prompt,
            "temperature": self.temperature,
        }
        return json.dumps(
            payload, sort_keys=True, ensure_ascii=False, separators=(",", ":")
        ).encode("utf-8")

    def to_dict(self) -> dict[str, Any]:
        return {"model_name": self.model_name, "temperature": self.temperature, "prompt": self.prompt}


def request_hash(req: LlmRequest) -> str:
    return hashlib.sha256(req.canonical()).hexdigest()


@dataclass(frozen=True)
class ExchangeRecord:
    request_hash: str
    request: LlmRequest
    response_text: str
    recorded_at: str

    def to_json(self) -> str:
        return json.dumps(
            {
                "request_hash": self.request_hash,
                "request": self.request.to_dict(),
                "response_text": self.response_text,
                "recorded_at": self.recorded_at,
            },
            ensure_ascii=False,
        )

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ExchangeRecord:
        req = LlmRequest(**data["request"])
        digest = request_hash(req)
        if data.get("request_hash", digest) != digest:
            raise ValueError(f"cache record hash mismatch for {data['request_hash'][:16]}")
        return cls(digest, req, data["response_text"], data.get("recorded_at", ""))


class ExchangeCache:
    """JSONL-backed exchange store; reads are lock-free, appends serialized."""

    def __init__(self, path: str | Path | None = None) -> None:
        self.path = Path(path) if path is not None else None
        self._records: dict[str, ExchangeRecord] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        with self.path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    record = ExchangeRecord.from_dict(json.loads(line))
                except (ValueError, KeyError, TypeError) as exc:
                    raise ValueError(f"{self.path}:{lineno}: bad cache record ({exc})") from None
                self._records[record.request_hash] = record

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, digest: str) -> bool:
        return digest in self._records

    def get(self, digest: str) -> ExchangeRecord | None:
        return self._records.get(digest)

    def append(self, record: ExchangeRecord) -> None:
        with self._lock:
            self._records[record.request_hash] = record
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(record.to_json() + "\n")


@dataclass
class GatewayConfig:
    mode: str = "replay"
    base_url: str = DEFAULT_BASE_URL
    model_name: str = DEFAULT_MODEL
    temperature: float = 0.0
    cache_path: str | None = None
    permits: int = 4
    max_retries: int = 3
    backoff_base: float = 1.0
    timeout: float = 60.0
    api_key_env: str = DEFAULT_API_KEY_ENV

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown gateway mode {self.mode!r}; expected one of {MODES}")
        if self.permits < 1:
            raise ValueError("permits must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> GatewayConfig:
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown gateway config keys: {', '.join(sorted(unknown))}")
        return cls(**data)

    def snapshot(self) -> dict[str, Any]:
        return {"model_name": self.model_name, "temperature": float(self.temperature)}


def _utcnow() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


class Gateway:
    """Sends prompts to an OpenAI-compatible ``/chat/completions`` endpoint.

    ``transport`` and ``sleep`` exist for tests; production code leaves them
    at their defaults.
    """

    def __init__(
        self,
        config: GatewayConfig,
        *,
        cache: ExchangeCache | None = None,
        transport: httpx.BaseTransport | None = None,
        api_key: str | None = None,
        sleep: Callable[[float], None] = time.sleep,
        clock: Callable[[], str] = _utcnow,
    ) -> None:
        self.config = config
        if cache is None:
            if config.mode == "replay" and config.cache_path is None:
                raise ValueError("replay mode needs a cache_path")
            if config.mode == "replay" and not Path(config.cache_path).exists():
                raise FileNotFoundError(f"replay cache not found: {config.cache_path}")
            cache = ExchangeCache(config.cache_path)
        self.cache = cache
        self._transport = transport
        self._api_key = api_key
        self._sleep = sleep
        self._clock = clock
        self._permits = threading.BoundedSemaphore(config.permits)
        self._client: httpx.Client | None = None
        self._client_lock = threading.Lock()

    def request(self, prompt: str) -> LlmRequest:
        return LlmRequest(prompt, self.config.model_name, self.config.temperature)

    def complete(self, req: LlmRequest | str, mode: str | None = None) -> str:
        if isinstance(req, str):
            req = self.request(req)
        mode = mode or self.config.mode
        digest = request_hash(req)
        if mode == "replay":
            record = self.cache.get(digest)
            if record is None:
                raise CacheMissError(digest)
            return record.response_text
        if mode not in ("live", "record"):
            raise ValueError(f"unknown gateway mode {mode!r}")

        with self._permits:
            text = self._post(req)
        if mode == "record":
            self.cache.append(ExchangeRecord(digest, req, text, self._clock()))
        return text

    def _credential(self) -> str:
        if self._api_key is not None:
            return self._api_key
        key = os.environ.get(self.config.api_key_env)
        if not key:
            raise CredentialError(f"environment variable {self.config.api_key_env} is not set")
        return key

    def _http(self) -> httpx.Client:
        with self._client_lock:
            if self._client is None:
                self._client = httpx.Client(
                    base_url=self.config.base_url.rstrip("/") + "/",
                    timeout=self.config.timeout,
                    transport=self._transport,
                )
            return self._client

    def close(self) -> None:
        if self._client is not None:
            self._client.close()
            self._client = None

    def _post(self, req: LlmRequest) -> str:
        headers = {"Authorization": f"Bearer {self._credential()}"}
        body = {
            "model": req.model_name,
            "temperature": req.temperature,
            "messages": [{"role": "user", "content": req.prompt}],
        }
        attempt = 0
        while True:
            try:
                resp = self._http().post("chat/completions", json=body, headers=headers)
            except httpx.TransportError as exc:
                if attempt >= self.config.max_retries:
                    raise NetworkError(f"request failed: {exc}") from exc
            else:
                if resp.status_code < 400:
                    return _extract_text(resp)
                if resp.status_code not in RETRY_STATUSES or attempt >= self.config.max_retries:
                    raise HTTPStatusError(resp.status_code, resp.text)
            delay = self.config.backoff_base * 2**attempt * (1 + random.random() / 10)
            log.warning("retrying chat completion in %.1fs (attempt %d)", delay, attempt + 1)
            self._sleep(delay)
            attempt += 1


def _extract_text(resp: httpx.Response) -> str:
    try:
        data = resp.json()
        content = data["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise MalformedResponseError(f"unexpected response shape: {exc!r}") from None
    if not isinstance(content, str):
        raise MalformedResponseError("message content is not a string")
    return content
