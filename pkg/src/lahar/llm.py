"""Completion backends: live HTTP, transcript replay, and the shared transcript log."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Optional, Union

import httpx

logger = logging.getLogger(__name__)

REFERENCE_MODEL = "gpt-4-32k-0613"
API_KEY_ENV = "LAHAR_API_KEY"
ENDPOINT_ENV = "LAHAR_ENDPOINT"


class BackendError(Exception):
    pass


class BackendUnavailable(BackendError):
    pass


class RateLimited(BackendError):
    def __init__(self, message: str, retry_after: Optional[float] = None) -> None:
        super().__init__(message)
        self.retry_after = retry_after


class ContextTooLong(BackendError):
    pass


@dataclass(frozen=True)
class CompletionRequest:
    model: str
    system: str
    user: str
    temperature: float = 0.0
    max_output_tokens: int = 4096

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not self.user:
            raise ValueError("user text must be non-empty")

    @property
    def key(self) -> str:
        payload = json.dumps(
            [self.model, float(self.temperature), self.system, self.user], ensure_ascii=False
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass
class TranscriptEntry:
    key: str
    request: CompletionRequest
    response: str
    meta: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {"key": self.key, "request": asdict(self.request), "response": self.response, "meta": self.meta},
            ensure_ascii=False,
        )

    @classmethod
    def from_dict(cls, d: dict) -> "TranscriptEntry":
        req = CompletionRequest(**d["request"])
        return cls(d.get("key") or req.key, req, d["response"], d.get("meta", {}))


class Transcript:
    """Append-only JSONL log of every completion issued through a backend."""

    def __init__(self, path: Union[str, Path, None] = None) -> None:
        self.path = Path(path) if path else None
        self.entries: list[TranscriptEntry] = []
        self._lock = threading.Lock()
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("", encoding="utf-8")

    def append(self, entry: TranscriptEntry) -> None:
        with self._lock:
            self.entries.append(entry)
            if self.path is not None:
                with self.path.open("a", encoding="utf-8") as f:
                    f.write(entry.to_json() + "\n")


def read_transcripts(paths: Iterable[Union[str, Path]]) -> list[TranscriptEntry]:
    """Entries from JSONL files or directories of them (``*.jsonl``, sorted by name)."""
    files: list[Path] = []
    for p in map(Path, paths):
        files.extend(sorted(p.glob("*.jsonl")) if p.is_dir() else [p])
    entries = []
    for f in files:
        for line in f.read_text(encoding="utf-8").splitlines():
            if line.strip():
                entries.append(TranscriptEntry.from_dict(json.loads(line)))
    return entries


class Backend:
    """Base class; subclasses implement :meth:`_complete`."""

    name = "backend"

    def _complete(self, req: CompletionRequest) -> tuple[str, dict]:
        raise NotImplementedError

    def complete(self, req: CompletionRequest, transcript: Optional[Transcript] = None) -> str:
        started = time.perf_counter()
        text, meta = self._complete(req)
        if transcript is not None:
            meta = {
                "backend": self.name,
                "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
                "latency_ms": round((time.perf_counter() - started) * 1000, 3),
                **meta,
            }
            transcript.append(TranscriptEntry(req.key, req, text, meta))
        return text


class ReplayBackend(Backend):
    """Answers from recorded transcripts, keyed by request digest.

    In strict mode an unknown request raises :class:`BackendUnavailable`;
    otherwise it is forwarded to ``fallback`` (and thereby recorded by the caller).
    """

    name = "replay"

    def __init__(self, entries: Iterable[TranscriptEntry], strict: bool = True, fallback: Optional[Backend] = None):
        self.responses: dict[str, str] = {}
        for e in entries:
            self.responses.setdefault(e.key, e.response)
        self.strict = strict
        self.fallback = fallback

    @classmethod
    def from_paths(cls, paths, strict: bool = True, fallback: Optional[Backend] = None) -> "ReplayBackend":
        return cls(read_transcripts(paths), strict, fallback)

    def _complete(self, req: CompletionRequest) -> tuple[str, dict]:
        hit = self.responses.get(req.key)
        if hit is not None:
            return hit, {"cache": "hit"}
        if self.strict or self.fallback is None:
            raise BackendUnavailable(f"no recorded response for request {req.key[:12]}")
        text, meta = self.fallback._complete(req)
        return text, {"cache": "miss", **meta}


class LiveBackend(Backend):
    """OpenAI-compatible ``/chat/completions`` client.

    Transient failures (connection errors, 5xx, 429) are retried with exponential
    backoff up to ``attempts`` tries in total.
    """

    name = "live"

    def __init__(
        self,
        endpoint: Optional[str] = None,
        api_key: Optional[str] = None,
        attempts: int = 3,
        backoff: float = 1.0,
        timeout: float = 120.0,
        client: Optional[httpx.Client] = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.endpoint = (endpoint or os.environ.get(ENDPOINT_ENV) or "").rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        if not self.endpoint:
            raise BackendUnavailable(f"no endpoint configured (set {ENDPOINT_ENV} or [run].endpoint)")
        self.attempts = attempts
        self.backoff = backoff
        self.sleep = sleep
        self.client = client or httpx.Client(timeout=timeout)

    def _payload(self, req: CompletionRequest) -> dict:
        messages = []
        if req.system:
            messages.append({"role": "system", "content": req.system})
        messages.append({"role": "user", "content": req.user})
        return {
            "model": req.model,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        }

    def _complete(self, req: CompletionRequest) -> tuple[str, dict]:
        url = self.endpoint if self.endpoint.endswith("/chat/completions") else self.endpoint + "/chat/completions"
        headers = {"Authorization": f"Bearer {self.api_key}", "api-key": self.api_key}
        last: Exception = BackendUnavailable("no attempt made")
        for attempt in range(self.attempts):
            if attempt:
                delay = self.backoff * 2 ** (attempt - 1)
                if isinstance(last, RateLimited) and last.retry_after:
                    delay = max(delay, last.retry_after)
                logger.warning("retrying completion in %.1fs after: %s", delay, last)
                self.sleep(delay)
            try:
                resp = self.client.post(url, json=self._payload(req), headers=headers)
            except httpx.TransportError as exc:
                last = BackendUnavailable(f"transport error: {exc}")
                continue
            if resp.status_code == 429:
                retry_after = resp.headers.get("retry-after")
                last = RateLimited("rate limited", float(retry_after) if retry_after else None)
                continue
            if resp.status_code >= 500:
                last = BackendUnavailable(f"server error {resp.status_code}")
                continue
            if resp.status_code == 400 and "context_length" in resp.text:
                raise ContextTooLong(resp.text[:500])
            if resp.status_code >= 400:
                raise BackendUnavailable(f"request rejected ({resp.status_code}): {resp.text[:500]}")
            body = resp.json()
            text = body["choices"][0]["message"]["content"] or ""
            return text, {"usage": body.get("usage", {}), "attempts": attempt + 1}
        if isinstance(last, RateLimited):
            raise last
        raise BackendUnavailable(f"gave up after {self.attempts} attempts: {last}")
