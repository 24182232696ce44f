"""Wikipedia summary lookup and the per-document knowledge dictionary.

Lookups hit the REST ``/page/summary/{title}`` endpoint, keep the first two
sentences of the page extract, and are cached on disk keyed by the
normalized phrase.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable
from urllib.parse import quote

import httpx

from .corpus import TokenizerConfig, count_tokens

logger = logging.getLogger(__name__)

DEFAULT_BASE_URL = "https://en.wikipedia.org/api/rest_v1"
USER_AGENT = "mapex-keyphrase/0.1 (research benchmark; contact via project README)"
SUMMARY_SENTENCES = 2

_EDGE_PUNCT = re.compile(r"^[\W_]+|[\W_]+$")
_SENTENCE_END = re.compile(r"(?<=[.!?])\s+(?=[A-Z0-9\"'(\[])")


def normalize_lookup(phrase: str) -> str:
    """Lowercase, collapse whitespace, strip punctuation at the edges."""
    return _EDGE_PUNCT.sub("", " ".join(phrase.lower().split()))


def first_sentences(text: str, n: int = SUMMARY_SENTENCES) -> str:
    text = " ".join(text.split())
    return " ".join(_SENTENCE_END.split(text)[:n])


@dataclass(frozen=True)
class KnowledgeEntry:
    phrase: str
    summary: str | None = None
    source_title: str | None = None
    fetched_at: str | None = None
    error: str | None = None

    def __post_init__(self):
        if (self.summary is None) != (self.source_title is None):
            raise ValueError("summary and source_title must both be present or both absent")

    @property
    def hit(self) -> bool:
        return self.summary is not None


@dataclass(frozen=True)
class KnowledgeDict:
    doc_id: str
    entries: dict[str, KnowledgeEntry]

    def keys(self) -> list[str]:
        return list(self.entries)


class RateLimiter:
    """Global minimum spacing between requests."""

    def __init__(self, per_second: float, clock=time.monotonic, sleep=time.sleep):
        self.interval = 1.0 / per_second if per_second > 0 else 0.0
        self._clock = clock
        self._sleep = sleep
        self._next = 0.0
        self._lock = threading.Lock()

    def wait(self) -> None:
        if not self.interval:
            return
        with self._lock:
            now = self._clock()
            delay = self._next - now
            self._next = max(now, self._next) + self.interval
        if delay > 0:
            self._sleep(delay)


class WikiClient:
    """Cached, rate-limited client for Wikipedia page summaries.

    With ``offline=True`` only the cache is consulted; a miss returns an
    entry with no summary and an ``offline`` error instead of fetching.
    Transport failures are never cached, so a later run can retry them.
    """

    def __init__(
        self,
        base_url: str = DEFAULT_BASE_URL,
        cache_path: str | os.PathLike | None = None,
        rate_limit: float = 10.0,
        offline: bool = False,
        transport: httpx.BaseTransport | None = None,
        timeout: float = 15.0,
        max_attempts: int = 3,
        sleep: Callable[[float], None] = time.sleep,
        clock: Callable[[], float] | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.cache_path = Path(cache_path) if cache_path else None
        self.offline = offline
        self.max_attempts = max_attempts
        self._sleep = sleep
        self._clock = clock or (lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))
        self._limiter = RateLimiter(rate_limit, sleep=sleep)
        self._cache: dict[str, dict] = {}
        self._cache_lock = threading.Lock()
        self._key_locks: dict[str, threading.Lock] = {}
        self._transport = transport
        self._timeout = timeout
        self._client: httpx.Client | None = None
        self._client_lock = threading.Lock()
        self.fetches = 0
        if self.cache_path and self.cache_path.exists():
            with self.cache_path.open(encoding="utf-8") as fh:
                self._cache = json.load(fh)

    def _http(self) -> httpx.Client:
        with self._client_lock:
            if self._client is None:
                self._client = httpx.Client(
                    headers={"User-Agent": USER_AGENT, "Accept": "application/json"},
                    timeout=self._timeout,
                    transport=self._transport,
                    follow_redirects=True,
                )
            return self._client

    def _key_lock(self, key: str) -> threading.Lock:
        with self._cache_lock:
            return self._key_locks.setdefault(key, threading.Lock())

    def query(self, phrase: str) -> KnowledgeEntry:
        if not phrase or not phrase.strip():
            raise ValueError("cannot look up an empty phrase")
        key = normalize_lookup(phrase)
        if not key:
            return KnowledgeEntry(phrase)
        with self._key_lock(key):
            cached = self._cache.get(key)
            if cached is not None:
                return KnowledgeEntry(
                    phrase, cached.get("summary"), cached.get("source_title"), cached.get("fetched_at")
                )
            if self.offline:
                return KnowledgeEntry(phrase, error="offline cache miss")
            try:
                record = self._fetch(key)
            except (httpx.HTTPError, ValueError) as exc:
                logger.warning("wiki lookup failed for %r: %s", key, exc)
                return KnowledgeEntry(phrase, error=f"transport: {exc}")
            with self._cache_lock:
                self._cache[key] = record
                self._save_locked()
        return KnowledgeEntry(phrase, record["summary"], record["source_title"], record["fetched_at"])

    def _fetch(self, key: str) -> dict:
        url = f"{self.base_url}/page/summary/{quote(key.replace(' ', '_'), safe='')}"
        last: Exception | None = None
        for attempt in range(self.max_attempts):
            if attempt:
                self._sleep(2 ** (attempt - 1))
            self._limiter.wait()
            with self._cache_lock:
                self.fetches += 1
            try:
                resp = self._http().get(url)
            except httpx.TransportError as exc:
                last = exc
                continue
            if resp.status_code >= 500 or resp.status_code == 429:
                last = httpx.HTTPStatusError(f"HTTP {resp.status_code}", request=resp.request, response=resp)
                continue
            record = {"summary": None, "source_title": None, "fetched_at": self._clock()}
            if resp.status_code == 200:
                data = resp.json()
                extract = (data.get("extract") or "").strip()
                if data.get("type") != "disambiguation" and extract:
                    record["summary"] = first_sentences(extract)
                    record["source_title"] = data.get("title") or key
            return record
        raise last if isinstance(last, httpx.HTTPError) else httpx.TransportError(str(last))

    def _save_locked(self) -> None:
        if not self.cache_path:
            return
        tmp = self.cache_path.with_name(self.cache_path.name + ".tmp")
        tmp.write_text(json.dumps(self._cache, indent=1, sort_keys=True, ensure_ascii=False) + "\n", "utf-8")
        tmp.replace(self.cache_path)

    def close(self) -> None:
        if self._client is not None:
            self._client.close()


def wiki_query(phrase: str, client: WikiClient) -> KnowledgeEntry:
    return client.query(phrase)


def build_knowledge_dict(pool, client: WikiClient, diagnostics: list[str] | None = None) -> KnowledgeDict:
    """One entry per distinct candidate, keyed by its first surface form."""
    entries: dict[str, KnowledgeEntry] = {}
    seen: set[str] = set()
    for cand in pool.candidates:
        if cand.casefold() in seen:
            continue
        seen.add(cand.casefold())
        entry = client.query(cand)
        if entry.error and diagnostics is not None:
            diagnostics.append(f"knowledge: {cand!r}: {entry.error}")
        entries[cand] = entry
    return KnowledgeDict(pool.doc_id, entries)


def render_knowledge(
    kdict: KnowledgeDict,
    budget: int,
    tokenizer: TokenizerConfig | None = None,
    diagnostics: list[str] | None = None,
) -> str:
    """Serialize as ``phrase: summary`` lines, cut at whole entries to fit ``budget`` tokens."""
    if budget <= 0:
        raise ValueError("budget must be positive")
    lines: list[str] = []
    for phrase, entry in kdict.entries.items():
        line = f"{phrase}: {entry.summary if entry.hit else '(no entry)'}"
        if count_tokens("\n".join(lines + [line]), tokenizer) > budget:
            if diagnostics is not None:
                dropped = len(kdict.entries) - len(lines)
                diagnostics.append(f"knowledge: truncated {dropped} entries to fit {budget} tokens")
            break
        lines.append(line)
    return "\n".join(lines)
