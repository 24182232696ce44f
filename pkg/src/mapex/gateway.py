"""Chat-completion gateway: deterministic decoding, retries, cassettes.

Every LLM call in the pipeline goes through :class:`Gateway.complete`. A
:class:`Cassette` maps a request fingerprint to a stored response so runs
can be replayed without a live endpoint.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import httpx

logger = logging.getLogger(__name__)

MODES = ("record", "replay", "passthrough")


class GatewayError(Exception):
    pass


class CassetteMiss(GatewayError):
    def __init__(self, fingerprint: str):
        self.fingerprint = fingerprint
        super().__init__(f"cassette miss: no recorded response for fingerprint {fingerprint}")


class TransportError(GatewayError):
    pass


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[tuple[str, str], ...]
    model: str
    temperature: float = 0.0
    max_output_tokens: int = 512

    def __post_init__(self):
        if not any(role == "user" for role, _ in self.messages):
            raise ValueError("a chat request needs at least one user message")
        for role, _ in self.messages:
            if role not in ("system", "user"):
                raise ValueError(f"unsupported message role {role!r}")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")

    def fingerprint(self) -> str:
        payload = {
            "model": self.model,
            "messages": [[r, c] for r, c in self.messages],
            "temperature": self.temperature,
            "max_output_tokens": self.max_output_tokens,
        }
        canon = json.dumps(payload, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ChatResponse:
    content: str
    finish_reason: str = "stop"
    usage: tuple[int, int] = (0, 0)

    def to_json(self) -> dict:
        return {
            "content": self.content,
            "finish_reason": self.finish_reason,
            "usage": {"prompt_tokens": self.usage[0], "completion_tokens": self.usage[1]},
        }

    @classmethod
    def from_json(cls, data: dict) -> "ChatResponse":
        usage = data.get("usage") or {}
        return cls(
            content=data.get("content") or "",
            finish_reason=data.get("finish_reason") or "stop",
            usage=(int(usage.get("prompt_tokens", 0)), int(usage.get("completion_tokens", 0))),
        )


class Cassette:
    """Fingerprint -> response store, persisted as one JSON document."""

    def __init__(self, path: str | os.PathLike | None = None, mode: str = "replay"):
        if mode not in MODES:
            raise ValueError(f"unknown cassette mode {mode!r}")
        self.path = Path(path) if path else None
        self.mode = mode
        self.entries: dict[str, ChatResponse] = {}
        self.hits: Counter[str] = Counter()
        self._lock = threading.Lock()
        if self.path and self.path.exists():
            with self.path.open(encoding="utf-8") as fh:
                data = json.load(fh)
            self.entries = {k: ChatResponse.from_json(v) for k, v in data.items()}
        elif mode == "replay" and self.path:
            raise GatewayError(f"cassette file not found: {self.path}")

    def __len__(self):
        return len(self.entries)

    def lookup(self, fingerprint: str) -> ChatResponse:
        resp = self.entries.get(fingerprint)
        if resp is None:
            raise CassetteMiss(fingerprint)
        with self._lock:
            self.hits[fingerprint] += 1
        return resp

    def store(self, fingerprint: str, response: ChatResponse) -> None:
        with self._lock:
            self.entries[fingerprint] = response
            if self.path:
                self._save_locked()

    def save(self) -> None:
        with self._lock:
            self._save_locked()

    def _save_locked(self) -> None:
        data = {k: self.entries[k].to_json() for k in sorted(self.entries)}
        tmp = self.path.with_name(self.path.name + ".tmp")
        tmp.write_text(json.dumps(data, indent=1, sort_keys=True, ensure_ascii=False) + "\n", "utf-8")
        tmp.replace(self.path)


@dataclass
class GatewayConfig:
    base_url: str = field(default_factory=lambda: os.environ.get("MAPEX_BASE_URL", "http://localhost:8000/v1"))
    api_key: str = field(default_factory=lambda: os.environ.get("MAPEX_API_KEY", ""))
    model: str = field(default_factory=lambda: os.environ.get("MAPEX_MODEL", "Qwen/Qwen2.5-7B-Instruct"))
    temperature: float = 0.0
    max_output_tokens: int = 512
    timeout: float = 120.0
    max_attempts: int = 3
    backoff: float = 1.0


class Gateway:
    def __init__(
        self,
        config: GatewayConfig | None = None,
        cassette: Cassette | None = None,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.config = config or GatewayConfig()
        self.cassette = cassette if cassette is not None else Cassette(mode="passthrough")
        self._transport = transport
        self._sleep = sleep
        self._client: httpx.Client | None = None
        self._client_lock = threading.Lock()
        self._count_lock = threading.Lock()
        self.calls = 0
        self.network_calls = 0

    def request(self, messages, max_output_tokens: int | None = None) -> ChatRequest:
        return ChatRequest(
            messages=tuple((r, c) for r, c in messages),
            model=self.config.model,
            temperature=self.config.temperature,
            max_output_tokens=max_output_tokens or self.config.max_output_tokens,
        )

    def complete(self, request: ChatRequest) -> ChatResponse:
        with self._count_lock:
            self.calls += 1
        fp = request.fingerprint()
        mode = self.cassette.mode
        if mode == "replay":
            response = self.cassette.lookup(fp)
        else:
            response = self._post(request)
            if mode == "record":
                self.cassette.store(fp, response)
        if response.finish_reason == "length":
            logger.warning("response %s truncated at max_output_tokens", fp[:12])
        return response

    def _http(self) -> httpx.Client:
        with self._client_lock:
            if self._client is None:
                headers = {"Content-Type": "application/json"}
                if self.config.api_key:
                    headers["Authorization"] = f"Bearer {self.config.api_key}"
                self._client = httpx.Client(
                    base_url=self.config.base_url.rstrip("/"),
                    headers=headers,
                    timeout=self.config.timeout,
                    transport=self._transport,
                )
            return self._client

    def _post(self, request: ChatRequest) -> ChatResponse:
        body = {
            "model": request.model,
            "messages": [{"role": r, "content": c} for r, c in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        last: Exception | None = None
        for attempt in range(self.config.max_attempts):
            if attempt:
                self._sleep(self.config.backoff * 2 ** (attempt - 1))
            with self._count_lock:
                self.network_calls += 1
            try:
                resp = self._http().post("/chat/completions", json=body)
            except httpx.TimeoutException as exc:
                last = exc
                logger.warning("attempt %d timed out", attempt + 1)
                continue
            except httpx.TransportError as exc:
                last = exc
                logger.warning("attempt %d transport failure: %s", attempt + 1, exc)
                continue
            if resp.status_code >= 500:
                last = TransportError(f"HTTP {resp.status_code}")
                logger.warning("attempt %d got HTTP %d", attempt + 1, resp.status_code)
                continue
            if resp.status_code >= 400:
                raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            return _parse_completion(resp.json())
        raise TransportError(f"endpoint failed after {self.config.max_attempts} attempts: {last}")

    def close(self) -> None:
        if self._client is not None:
            self._client.close()


def _parse_completion(data: dict) -> ChatResponse:
    try:
        choice = data["choices"][0]
        content = choice["message"].get("content") or ""
    except (KeyError, IndexError, TypeError, AttributeError) as exc:
        raise TransportError(f"malformed completion payload: {exc}") from exc
    finish = choice.get("finish_reason") or "stop"
    if finish not in ("stop", "length"):
        finish = "stop" if content else "error"
    usage = data.get("usage") or {}
    return ChatResponse(
        content, finish, (int(usage.get("prompt_tokens", 0)), int(usage.get("completion_tokens", 0)))
    )


# ---------------------------------------------------------------- list parsing

_FENCE = re.compile(r"^```[a-zA-Z]*\s*\n?|\n?```\s*$")
_NUMBERED = re.compile(r"^\s*\(?\d+[.)]\s+(.+)$")
_BULLET = re.compile(r"^\s*[-*•+]\s+(.+)$")
_WRAP = " \t\"'`*"
_TRAIL = ".,;"


def _clean(item: str) -> str:
    item = item.strip().strip(_WRAP).strip()
    item = item.rstrip(_TRAIL).strip().strip(_WRAP).strip()
    return item


def _json_list(text: str) -> list[str] | None:
    candidates = [text]
    start, end = text.find("["), text.rfind("]")
    if 0 <= start < end:
        candidates.append(text[start : end + 1])
    for cand in candidates:
        try:
            value = json.loads(cand)
        except (json.JSONDecodeError, ValueError):
            continue
        if isinstance(value, list) and all(isinstance(v, str) for v in value):
            return value
    return None


def parse_phrase_list_with_format(raw: str) -> tuple[list[str], str]:
    """Parse an LLM list answer. Returns the phrases and the detected format.

    Formats are tried in priority order: ``json`` array, ``numbered`` lines,
    ``bulleted`` lines, a single ``comma``-separated line, bare ``lines``.
    ``unparsed`` means nothing usable was found.
    """
    text = _FENCE.sub("", (raw or "").strip()).strip()
    if not text:
        return [], "unparsed"
    items = _json_list(text)
    fmt = "json"
    if items is None:
        lines = [ln for ln in text.splitlines() if ln.strip()]
        numbered = [m.group(1) for m in map(_NUMBERED.match, lines) if m]
        bulleted = [m.group(1) for m in map(_BULLET.match, lines) if m]
        if numbered:
            items, fmt = numbered, "numbered"
        elif bulleted:
            items, fmt = bulleted, "bulleted"
        elif len(lines) == 1 and "," in lines[0]:
            items, fmt = lines[0].split(","), "comma"
        else:
            items = [ln for ln in lines if not ln.rstrip().endswith(":")]
            fmt = "lines"
    seen: set[str] = set()
    out = []
    for item in items:
        item = " ".join(_clean(item).split())
        key = item.casefold()
        if item and key not in seen:
            seen.add(key)
            out.append(item)
    if not out:
        return [], "unparsed"
    return out, fmt


def parse_phrase_list(raw: str, diagnostics: list[str] | None = None) -> list[str]:
    phrases, fmt = parse_phrase_list_with_format(raw)
    if fmt == "unparsed" and diagnostics is not None:
        diagnostics.append("unparseable phrase list")
    return phrases
