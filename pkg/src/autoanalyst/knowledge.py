"""External knowledge retrieval: query formulation, search backends, cache.

The live backend talks to a search API over HTTP; the canned backend
serves fixture snippets from a JSON file so the online branch is fully
testable offline. Results are cached by (query, k) with a TTL.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from collections import Counter
from dataclasses import dataclass, field

import requests

from .errors import SearchAuthError, SearchTransportError, UnreadableFile
from .extraction import ExtractedData

DEFAULT_K = 6
SNIPPET_MAX_CHARS = 300
CACHE_TTL_SECONDS = 24 * 3600
QUERY_MAX_CHARS = 256

# phrases that point at the database rather than the outside world
_STOP_PHRASES = ("combining the data of", "in the database")


@dataclass
class Snippet:
    text: str
    source_url: str
    rank: int


@dataclass
class KnowledgeSnippets:
    query: str
    snippets: list[Snippet] = field(default_factory=list)
    fetched_at: float = 0.0


def formulate_query(question: str, data: ExtractedData | None = None) -> str:
    """Turn a task question into a search query.

    Drops the stop phrases, then appends the most frequent text labels
    from the extracted data (up to three, ties broken by first
    appearance) to anchor the search. Capped at 256 chars.
    """
    query = question
    for phrase in _STOP_PHRASES:
        query = re.sub(re.escape(phrase), " ", query, flags=re.IGNORECASE)
    query = re.sub(r"\s+", " ", query).strip()
    if data is not None:
        texts = [
            v for row in data.rows for v in row if isinstance(v, str) and v.strip()
        ]
        counts = Counter(texts)
        # Counter preserves first-appearance order for equal counts
        top = [t for t, _ in counts.most_common(3)]
        for label in top:
            if label.lower() not in query.lower():
                query += f" {label}"
    return query[:QUERY_MAX_CHARS]


class CannedBackend:
    """Fixture-driven search backend: a JSON map query -> results."""

    def __init__(self, path: str):
        try:
            with open(path, encoding="utf-8") as fh:
                self._data = json.load(fh)
        except OSError as exc:
            raise UnreadableFile(f"{path}: {exc}") from exc
        self.calls = 0

    def search(self, query: str, k: int) -> list[dict]:
        self.calls += 1
        return list(self._data.get(query, []))[:k]


class LiveBackend:
    """Minimal HTTP search client; expects {"results": [{"text","url"}]}."""

    def __init__(self, endpoint: str | None = None, api_key: str | None = None):
        self.endpoint = endpoint or os.environ.get("DA_SEARCH_ENDPOINT")
        self.api_key = api_key or os.environ.get("DA_SEARCH_API_KEY")
        self.calls = 0

    def search(self, query: str, k: int) -> list[dict]:
        if not self.endpoint or not self.api_key:
            raise SearchAuthError("search endpoint or API key not configured")
        self.calls += 1
        try:
            resp = requests.get(
                self.endpoint,
                params={"q": query, "count": k},
                headers={"Authorization": f"Bearer {self.api_key}"},
                timeout=30,
            )
        except requests.RequestException as exc:
            raise SearchTransportError(str(exc)) from exc
        if resp.status_code in (401, 403):
            raise SearchAuthError(f"search API returned {resp.status_code}")
        if resp.status_code != 200:
            raise SearchTransportError(f"search API returned {resp.status_code}")
        try:
            return list(resp.json().get("results", []))[:k]
        except ValueError as exc:
            raise SearchTransportError(f"bad search response: {exc}") from exc


class SnippetCache:
    """(query, k) -> KnowledgeSnippets with TTL, optionally file-backed."""

    def __init__(self, path: str | None = None, ttl: float = CACHE_TTL_SECONDS):
        self._path = path
        self._ttl = ttl
        self._lock = threading.Lock()
        self._entries: dict[str, dict] = {}
        if path and os.path.exists(path):
            with open(path, encoding="utf-8") as fh:
                self._entries = json.load(fh)

    @staticmethod
    def _key(query: str, k: int) -> str:
        return f"{k}\x1f{query}"

    def get(self, query: str, k: int, now: float) -> KnowledgeSnippets | None:
        entry = self._entries.get(self._key(query, k))
        if entry is None or now - entry["fetched_at"] > self._ttl:
            return None
        return KnowledgeSnippets(
            query=query,
            snippets=[Snippet(**s) for s in entry["snippets"]],
            fetched_at=entry["fetched_at"],
        )

    def put(self, result: KnowledgeSnippets, k: int) -> None:
        self._entries[self._key(result.query, k)] = {
            "fetched_at": result.fetched_at,
            "snippets": [vars(s) for s in result.snippets],
        }
        if self._path:
            with open(self._path, "w", encoding="utf-8") as fh:
                json.dump(self._entries, fh, indent=1)

    @property
    def lock(self) -> threading.Lock:
        return self._lock


def retrieve(
    query: str,
    k: int = DEFAULT_K,
    backend=None,
    cache: SnippetCache | None = None,
    clock=time.time,
) -> KnowledgeSnippets:
    """Fetch up to k snippets for a query, consulting the cache first.

    Snippet texts are clipped to 300 chars; ranks run 1..n. A backend
    with no results yields an empty snippet list, not an error.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if backend is None:
        backend = LiveBackend()
    if cache is None:
        return _fetch(query, k, backend, clock)
    with cache.lock:
        now = clock()
        hit = cache.get(query, k, now)
        if hit is not None:
            return hit
        result = _fetch(query, k, backend, clock)
        cache.put(result, k)
        return result


class Retriever:
    """g(.) as one object: query formulation + backend + cache + call count.

    The pipeline asks the retriever once per online task; `calls` makes
    that contract checkable from tests.
    """

    def __init__(
        self,
        backend,
        k: int = DEFAULT_K,
        cache: SnippetCache | None = None,
        clock=time.time,
    ):
        self.backend = backend
        self.k = k
        self.cache = cache
        self.clock = clock
        self.calls = 0
        self._lock = threading.Lock()

    def fetch(self, question: str, data: ExtractedData | None) -> KnowledgeSnippets:
        with self._lock:
            self.calls += 1
        query = formulate_query(question, data)
        return retrieve(query, self.k, self.backend, self.cache, self.clock)


def _fetch(query: str, k: int, backend, clock) -> KnowledgeSnippets:
    raw = backend.search(query, k)
    snippets = [
        Snippet(
            text=str(item.get("text", ""))[:SNIPPET_MAX_CHARS],
            source_url=str(item.get("url", "")),
            rank=i,
        )
        for i, item in enumerate(raw[:k], start=1)
    ]
    return KnowledgeSnippets(query=query, snippets=snippets, fetched_at=clock())
