"""Chat backends for the structurer and the judger.

``HttpChatBackend`` speaks the chat-completions JSON protocol over aiohttp and
retries transport failures with tenacity. ``MockChatBackend`` answers from a
JSON script and never touches the network. Both share a sliding-window
``RateLimiter`` contract.
"""

from __future__ import annotations

import asyncio
import hashlib
import json
import logging
import threading
import time
from abc import ABC, abstractmethod
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Awaitable, Callable, Union

import aiohttp
from tenacity import AsyncRetrying, retry_if_exception_type, stop_after_attempt, wait_exponential

from config import BackendConfig, RunConfig
from errors import BackendUnavailable, ConfigError
from schema import ALL_DIMENSIONS

logger = logging.getLogger(__name__)


# --- requests ---

@dataclass(frozen=True)
class TextPart:
    text: str


@dataclass(frozen=True)
class ImagePart:
    data_url: str


Part = Union[TextPart, ImagePart]


@dataclass(frozen=True)
class ChatRequest:
    """One chat call: a system text, ordered user parts and optional retry feedback.

    ``metadata`` carries ``purpose`` (structure / expand / judge), ``video_id``
    and the expected ``dimensions``; it is never sent over the wire.
    """
    system: str
    parts: tuple[Part, ...]
    temperature: float = 0.0
    max_tokens: int = 2048
    metadata: dict[str, Any] = field(default_factory=dict)
    retry_feedback: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if not any(isinstance(p, TextPart) and p.text.strip() for p in self.parts):
            raise ValueError("a chat request needs at least one text part")

    @property
    def image_count(self) -> int:
        return sum(isinstance(p, ImagePart) for p in self.parts)

    @property
    def purpose(self) -> str:
        return str(self.metadata.get("purpose", ""))

    def with_feedback(self, previous: str, error: str) -> "ChatRequest":
        return replace(self, retry_feedback=self.retry_feedback + ((previous, error),))

    def fingerprint(self) -> str:
        """Stable key over purpose, video id and the expected dimension set."""
        key = {
            "purpose": self.purpose,
            "video_id": self.metadata.get("video_id"),
            "dimensions": sorted(self.metadata.get("dimensions") or []),
        }
        return hashlib.sha256(json.dumps(key, sort_keys=True).encode("utf-8")).hexdigest()[:16]

    def to_messages(self) -> list[dict]:
        content: list[dict] = []
        for part in self.parts:
            if isinstance(part, TextPart):
                content.append({"type": "text", "text": part.text})
            else:
                content.append({"type": "image_url", "image_url": {"url": part.data_url}})
        messages = [{"role": "system", "content": self.system}, {"role": "user", "content": content}]
        for previous, error in self.retry_feedback:
            messages.append({"role": "assistant", "content": previous})
            messages.append({"role": "user", "content": (
                f"Your previous answer could not be used: {error}\n"
                "Answer again with only the required JSON."
            )})
        return messages


@dataclass(frozen=True)
class ChatResponse:
    text: str
    backend: str
    model: str


# --- rate limiting ---

class RateLimiter:
    """At most ``per_minute`` sends in any 60 s window.

    Slots are reserved under a lock and waited for outside it, so threads and
    event-loop tasks can share one limiter.
    """

    def __init__(
        self,
        per_minute: int,
        *,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], Awaitable[None]] = asyncio.sleep,
        window: float = 60.0,
    ):
        if per_minute < 1:
            raise ValueError("per_minute must be at least 1")
        self.per_minute = per_minute
        self.window = window
        self._clock = clock
        self._sleep = sleep
        self._slots: deque[float] = deque(maxlen=per_minute)
        self._lock = threading.Lock()

    def reserve(self) -> float:
        """Book the next free slot and return how long to wait for it."""
        with self._lock:
            now = self._clock()
            slot = max(now, self._slots[-1]) if self._slots else now
            if len(self._slots) == self.per_minute:
                slot = max(slot, self._slots[0] + self.window)
            self._slots.append(slot)
            return slot - now

    async def acquire(self) -> None:
        delay = self.reserve()
        if delay > 0:
            logger.debug("rate limit: waiting %.2fs", delay)
            await self._sleep(delay)


# --- backends ---

class ChatBackend(ABC):
    name: str
    model: str
    max_images: int = 16
    max_retries: int = 3

    @abstractmethod
    async def send(self, request: ChatRequest) -> ChatResponse:
        ...

    @property
    def identity(self) -> str:
        return f"{self.name}:{self.model}"

    async def close(self) -> None:
        pass

    async def __aenter__(self):
        return self

    async def __aexit__(self, *exc):
        await self.close()


class _Transient(Exception):
    """Failure worth another transport attempt."""


def _message_text(data: Any) -> str:
    try:
        content = data["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        raise BackendUnavailable("response has no choices[0].message.content") from None
    if isinstance(content, list):
        content = "".join(p.get("text", "") for p in content if isinstance(p, dict))
    if not isinstance(content, str):
        raise BackendUnavailable("response content is not text")
    return content


class HttpChatBackend(ChatBackend):
    def __init__(
        self,
        config: BackendConfig,
        *,
        name: str = "http",
        limiter: RateLimiter | None = None,
        retry_wait=None,
    ):
        self.config = config
        self.name = name
        self.model = config.model
        self.max_images = config.max_images
        self.max_retries = config.max_retries
        self._limiter = limiter or RateLimiter(config.requests_per_minute)
        self._retry_wait = retry_wait or wait_exponential(multiplier=0.5, max=20)
        self._session: aiohttp.ClientSession | None = None

    async def _get_session(self) -> aiohttp.ClientSession:
        if self._session is None or self._session.closed:
            self._session = aiohttp.ClientSession(timeout=aiohttp.ClientTimeout(total=self.config.timeout))
        return self._session

    async def close(self) -> None:
        if self._session is not None and not self._session.closed:
            await self._session.close()

    async def _post(self, body: dict, key: str) -> str:
        session = await self._get_session()
        headers = {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}
        try:
            async with session.post(self.config.endpoint, json=body, headers=headers) as resp:
                if resp.status == 429 or resp.status >= 500:
                    raise _Transient(f"HTTP {resp.status}")
                if resp.status >= 400:
                    detail = (await resp.text())[:200]
                    raise BackendUnavailable(f"{self.identity} rejected the request: HTTP {resp.status} {detail}")
                data = await resp.json(content_type=None)
        except (aiohttp.ClientConnectionError, aiohttp.ClientPayloadError, asyncio.TimeoutError) as e:
            raise _Transient(f"{type(e).__name__}: {e}") from e
        except json.JSONDecodeError as e:
            raise BackendUnavailable(f"{self.identity} returned invalid JSON: {e}") from None
        return _message_text(data)

    def _log_retry(self, state) -> None:
        logger.warning(
            "%s request attempt %d/%d failed: %s",
            self.identity, state.attempt_number, self.config.transport_attempts, state.outcome.exception(),
        )

    async def send(self, request: ChatRequest) -> ChatResponse:
        key = self.config.api_key()
        if not key:
            raise BackendUnavailable(f"environment variable {self.config.api_key_env} is not set")
        body = {
            "model": self.model,
            "messages": request.to_messages(),
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        try:
            async for attempt in AsyncRetrying(
                stop=stop_after_attempt(self.config.transport_attempts),
                wait=self._retry_wait,
                retry=retry_if_exception_type(_Transient),
                before_sleep=self._log_retry,
                reraise=True,
            ):
                with attempt:
                    await self._limiter.acquire()
                    text = await self._post(body, key)
        except _Transient as e:
            raise BackendUnavailable(
                f"{self.identity} unavailable after {self.config.transport_attempts} attempts: {e}"
            ) from None
        return ChatResponse(text=text, backend=self.name, model=self.model)


# --- mock ---

# Labels recognised by the echo structurer, mapped to the dimension they fill
_ECHO_LABELS = {
    "camera": "camera_motion",
    "background": "background",
    "subject": "appearance",
    "style": "style",
    "lighting": "lighting",
    "light": "lighting",
}


def _echo_structure(raw: str) -> str:
    names = {dim.value for dim in ALL_DIMENSIONS}
    dims: dict[str, str | None] = {name: None for name in sorted(names)}
    for line in raw.splitlines():
        label, sep, text = line.partition(":")
        label = label.strip().lower().replace(" ", "_")
        if not sep or not text.strip():
            continue
        target = _ECHO_LABELS.get(label, label if label in names else None)
        if target:
            dims[target] = text.strip() if dims[target] is None else f"{dims[target]} {text.strip()}"
    if not any(dims.values()):
        dims["appearance"] = raw.strip()
    return json.dumps(dims, sort_keys=True)


def _echo_expand(raw: str) -> str:
    return "\n".join([
        "Camera: steady medium shot.",
        f"Subject: {raw.strip()}",
        "Background: a plain setting that fits the subject.",
        "Style: realistic.",
        "Lighting: soft natural light.",
    ])


def _echo_judge(dimensions: list[str]) -> str:
    return json.dumps([{"dimension": d, "answer": "yes", "reason": ""} for d in dimensions])


class MockChatBackend(ChatBackend):
    """Scripted backend keyed by request fingerprint.

    Script layout: ``{"responses": {key: text | [text, ...]}, "fallback": text}``
    where ``key`` is a request fingerprint or ``"<purpose>:<video_id>"``. A list
    answers successive attempts and repeats its last item; an item of the form
    ``{"unavailable": message}`` raises ``BackendUnavailable``. Without a match
    the fallback is used, or a deterministic echo per purpose.
    """

    def __init__(
        self,
        script: dict | None = None,
        *,
        name: str = "mock",
        model: str = "mock",
        max_images: int = 16,
        max_retries: int = 3,
    ):
        script = script or {}
        self.name = name
        self.model = model
        self.max_images = max_images
        self.max_retries = max_retries
        self._responses: dict[str, Any] = dict(script.get("responses", {}))
        self._fallback = script.get("fallback")
        self._attempts: dict[str, int] = {}
        self._lock = threading.Lock()
        self.sent: list[ChatRequest] = []

    def _scripted(self, request: ChatRequest) -> Any:
        keys = [request.fingerprint(), f"{request.purpose}:{request.metadata.get('video_id')}"]
        for key in keys:
            if key in self._responses:
                entry = self._responses[key]
                if not isinstance(entry, list):
                    return entry
                with self._lock:
                    n = self._attempts.get(key, 0)
                    self._attempts[key] = n + 1
                return entry[min(n, len(entry) - 1)]
        return self._fallback

    def _echo(self, request: ChatRequest) -> str:
        meta = request.metadata
        if request.purpose == "structure":
            return _echo_structure(str(meta.get("raw_prompt", "")))
        if request.purpose == "expand":
            return _echo_expand(str(meta.get("raw_prompt", "")))
        if request.purpose == "judge":
            return _echo_judge(list(meta.get("dimensions") or []))
        return ""

    async def send(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            self.sent.append(request)
        entry = self._scripted(request)
        if isinstance(entry, dict) and "unavailable" in entry:
            raise BackendUnavailable(f"{self.identity}: {entry['unavailable']}")
        if entry is None:
            text = self._echo(request)
        elif isinstance(entry, str):
            text = entry
        else:
            text = json.dumps(entry)
        return ChatResponse(text=text, backend=self.name, model=self.model)


def load_mock_script(path: Path) -> dict:
    try:
        script = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot load mock script {path}: {e}") from None
    if not isinstance(script, dict):
        raise ConfigError(f"mock script {path} must hold a JSON object")
    return script


def make_backends(config: RunConfig) -> tuple[ChatBackend, ChatBackend]:
    """Structurer and judger backends for a run."""
    if config.backend == "mock":
        script = load_mock_script(config.mock_script) if config.mock_script is not None else None
        structurer = MockChatBackend(
            script, model="mock-structurer", max_retries=config.structurer.max_retries,
        )
        judger = MockChatBackend(
            script, model="mock-judger", max_images=config.judger.max_images, max_retries=config.judger.max_retries,
        )
        return structurer, judger
    return (
        HttpChatBackend(config.structurer, name="structurer"),
        HttpChatBackend(config.judger, name="judger"),
    )
