"""Language-model gateway: live HTTP, record, replay, and mock backends.

Replay serves stored responses keyed by a request fingerprint, so test
runs never touch the network. Record is live plus a cassette append.
Mock answers from a per-tag script: a string, a list of strings consumed
in order, a dict of prompt substrings to strings, or a callable of the
request.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass

import requests

from .errors import AuthError, CassetteMiss, RateLimited, TransportError

DEFAULT_MODEL = "gpt-4-0314"
DEFAULT_MAX_TOKENS = 1024
RETRY_DELAYS = (1.0, 2.0, 4.0)

BACKEND_MODES = ("live", "record", "replay", "mock")


@dataclass
class LlmRequest:
    prompt: str
    request_tag: str
    model_id: str = DEFAULT_MODEL
    temperature: float = 0.0
    max_tokens: int = DEFAULT_MAX_TOKENS

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be within [0, 2]")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")


@dataclass
class LlmResponse:
    text: str
    prompt_tokens: int
    completion_tokens: int
    latency: float
    backend: str


def fingerprint(request: LlmRequest) -> str:
    payload = json.dumps(
        {
            "model_id": request.model_id,
            "prompt": request.prompt,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class Cassette:
    """Recorded request/response pairs, exact-match by fingerprint."""

    def __init__(self):
        self._entries: dict[str, dict] = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._entries)

    def lookup(self, fp: str) -> LlmResponse | None:
        entry = self._entries.get(fp)
        if entry is None:
            return None
        stored = dict(entry["response"])
        stored["backend"] = "replay"
        return LlmResponse(**stored)

    def add(self, request: LlmRequest, response: LlmResponse) -> None:
        with self._lock:
            self._entries[fingerprint(request)] = {
                "request": {
                    "model_id": request.model_id,
                    "prompt": request.prompt,
                    "temperature": request.temperature,
                    "max_tokens": request.max_tokens,
                    "request_tag": request.request_tag,
                },
                "response": {
                    "text": response.text,
                    "prompt_tokens": response.prompt_tokens,
                    "completion_tokens": response.completion_tokens,
                    "latency": response.latency,
                },
            }

    def save(self, path: str) -> None:
        with self._lock:
            entries = [
                {"fingerprint": fp, "request": e["request"], "response": e["response"]}
                for fp, e in self._entries.items()
            ]
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"entries": entries}, fh, indent=1, ensure_ascii=False)

    @classmethod
    def load(cls, path: str) -> "Cassette":
        cassette = cls()
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        for entry in raw.get("entries", []):
            cassette._entries[entry["fingerprint"]] = {
                "request": entry["request"],
                "response": entry["response"],
            }
        return cassette


class HttpTransport:
    """One chat-completion round trip against an OpenAI-style endpoint."""

    def __init__(self, endpoint: str | None = None, api_key: str | None = None):
        self.endpoint = endpoint or os.environ.get("DA_LLM_ENDPOINT")
        self.api_key = api_key or os.environ.get("DA_LLM_API_KEY")

    def send(self, request: LlmRequest) -> tuple[str, int, int]:
        if not self.endpoint or not self.api_key:
            raise AuthError("LLM endpoint or API key not configured")
        try:
            resp = requests.post(
                self.endpoint,
                json={
                    "model": request.model_id,
                    "messages": [{"role": "user", "content": request.prompt}],
                    "temperature": request.temperature,
                    "max_tokens": request.max_tokens,
                },
                headers={"Authorization": f"Bearer {self.api_key}"},
                timeout=120,
            )
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        if resp.status_code in (401, 403):
            raise AuthError(f"API returned {resp.status_code}")
        if resp.status_code == 429:
            raise RateLimited("API rate limit")
        if resp.status_code != 200:
            raise TransportError(f"API returned {resp.status_code}")
        try:
            body = resp.json()
            text = body["choices"][0]["message"]["content"]
            usage = body.get("usage", {})
            return (
                text,
                int(usage.get("prompt_tokens", 0)),
                int(usage.get("completion_tokens", 0)),
            )
        except (KeyError, IndexError, ValueError, TypeError) as exc:
            raise TransportError(f"malformed API response: {exc}") from exc


def _rough_tokens(text: str) -> int:
    return max(1, len(text) // 4)


class LlmGateway:
    """f(.) with pluggable backends; safe for concurrent complete calls."""

    def __init__(
        self,
        mode: str,
        transport=None,
        cassette: Cassette | None = None,
        mock_script: dict | None = None,
        sleeper=time.sleep,
    ):
        if mode not in BACKEND_MODES:
            raise ValueError(f"unknown backend mode {mode!r}")
        if mode == "replay" and cassette is None:
            raise ValueError("replay mode requires a cassette")
        if mode == "mock" and mock_script is None:
            raise ValueError("mock mode requires a script")
        self.mode = mode
        self.transport = transport
        self.cassette = cassette if cassette is not None else Cassette()
        self.mock_script = mock_script or {}
        self._sleep = sleeper
        self._lock = threading.Lock()
        self.transport_calls = 0

    def complete(self, request: LlmRequest) -> LlmResponse:
        if self.mode == "mock":
            return self._complete_mock(request)
        if self.mode == "replay":
            hit = self.cassette.lookup(fingerprint(request))
            if hit is None:
                raise CassetteMiss(fingerprint(request))
            return hit
        response = self._complete_live(request)
        if self.mode == "record":
            self.cassette.add(request, response)
        return response

    def _complete_mock(self, request: LlmRequest) -> LlmResponse:
        entry = self.mock_script.get(request.request_tag)
        if entry is None:
            raise CassetteMiss(f"mock script has no entry for tag {request.request_tag!r}")
        if callable(entry):
            text = entry(request)
        elif isinstance(entry, list):
            with self._lock:
                if not entry:
                    raise CassetteMiss(
                        f"mock script exhausted for tag {request.request_tag!r}"
                    )
                text = entry.pop(0)
        elif isinstance(entry, dict):
            # keys are prompt substrings, first match in insertion order
            text = None
            for pattern, candidate in entry.items():
                if pattern in request.prompt:
                    text = candidate
                    break
            if text is None:
                raise CassetteMiss(
                    f"no mock pattern matched prompt for tag {request.request_tag!r}"
                )
        else:
            text = entry
        return LlmResponse(
            text=text,
            prompt_tokens=_rough_tokens(request.prompt),
            completion_tokens=_rough_tokens(text),
            latency=0.0,
            backend="mock",
        )

    def _complete_live(self, request: LlmRequest) -> LlmResponse:
        transport = self.transport
        if transport is None:
            transport = self.transport = HttpTransport()
        last: Exception | None = None
        for attempt in range(len(RETRY_DELAYS) + 1):
            try:
                started = time.monotonic()
                with self._lock:
                    self.transport_calls += 1
                text, pt, ct = transport.send(request)
                return LlmResponse(
                    text=text,
                    prompt_tokens=pt,
                    completion_tokens=ct,
                    latency=time.monotonic() - started,
                    backend="live",
                )
            except (RateLimited, TransportError) as exc:
                last = exc
                if attempt < len(RETRY_DELAYS):
                    self._sleep(RETRY_DELAYS[attempt])
        assert last is not None
        raise last


@dataclass
class PriceTable:
    prompt_usd_per_1k: float
    completion_usd_per_1k: float


DEFAULT_PRICES = PriceTable(prompt_usd_per_1k=0.03, completion_usd_per_1k=0.06)


def estimate_cost(
    responses: list[LlmResponse], price: PriceTable = DEFAULT_PRICES
) -> float:
    """Token usage priced in USD; additive over response lists."""
    total = 0.0
    for r in responses:
        total += r.prompt_tokens / 1000 * price.prompt_usd_per_1k
        total += r.completion_tokens / 1000 * price.completion_usd_per_1k
    return total
