import json

import httpx
import pytest

from lahar.llm import (
    BackendUnavailable,
    CompletionRequest,
    ContextTooLong,
    LiveBackend,
    RateLimited,
    ReplayBackend,
    Transcript,
    read_transcripts,
)

REQ = CompletionRequest("m", "system text", "user text")


def ok(text="[]"):
    return httpx.Response(200, json={"choices": [{"message": {"content": text}}], "usage": {"total_tokens": 3}})


def live(handler, attempts=3):
    sleeps = []
    client = httpx.Client(transport=httpx.MockTransport(handler))
    return LiveBackend("http://llm.test/v1", "k", attempts=attempts, client=client, sleep=sleeps.append), sleeps


def test_key_depends_on_content_only():
    assert REQ.key == CompletionRequest("m", "system text", "user text", 0.0, 99).key
    assert REQ.key != CompletionRequest("m", "system text", "user text!").key


def test_request_validation():
    with pytest.raises(ValueError):
        CompletionRequest("m", "", "")
    with pytest.raises(ValueError):
        CompletionRequest("m", "", "u", temperature=-1)


def test_live_sends_chat_payload():
    seen = {}

    def handler(request):
        seen["url"] = str(request.url)
        seen["auth"] = request.headers["authorization"]
        seen["body"] = json.loads(request.content)
        return ok("hello")

    backend, _ = live(handler)
    before = REQ.key
    assert backend.complete(REQ) == "hello"
    assert REQ.key == before
    assert seen["url"] == "http://llm.test/v1/chat/completions"
    assert seen["auth"] == "Bearer k"
    assert seen["body"]["messages"] == [
        {"role": "system", "content": "system text"}, {"role": "user", "content": "user text"},
    ]
    assert seen["body"]["temperature"] == 0.0


def test_live_retries_server_errors_with_backoff():
    codes = iter([503, 502, 200])

    def handler(request):
        code = next(codes)
        return ok() if code == 200 else httpx.Response(code)

    backend, sleeps = live(handler)
    assert backend.complete(REQ) == "[]"
    assert sleeps == [1.0, 2.0]


def test_live_gives_up_after_attempts():
    backend, sleeps = live(lambda r: httpx.Response(500))
    with pytest.raises(BackendUnavailable):
        backend.complete(REQ)
    assert len(sleeps) == 2


def test_live_rate_limit_honours_retry_after():
    backend, sleeps = live(lambda r: httpx.Response(429, headers={"retry-after": "7"}))
    with pytest.raises(RateLimited):
        backend.complete(REQ)
    assert sleeps == [7.0, 7.0]


def test_live_context_length_is_not_retried():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(400, json={"error": {"code": "context_length_exceeded"}})

    backend, _ = live(handler)
    with pytest.raises(ContextTooLong):
        backend.complete(REQ)
    assert len(calls) == 1


def test_live_transport_errors_become_unavailable():
    def handler(request):
        raise httpx.ConnectError("refused")

    backend, _ = live(handler, attempts=2)
    with pytest.raises(BackendUnavailable):
        backend.complete(REQ)


def test_live_requires_endpoint(monkeypatch):
    monkeypatch.delenv("LAHAR_ENDPOINT", raising=False)
    with pytest.raises(BackendUnavailable):
        LiveBackend()


def test_transcript_round_trip_and_replay(tmp_path):
    backend, _ = live(lambda r: ok("recorded"))
    path = tmp_path / "t.jsonl"
    tr = Transcript(path)
    backend.complete(REQ, tr)
    backend.complete(CompletionRequest("m", "s", "other"), tr)
    entries = read_transcripts([tmp_path])
    assert len(entries) == 2 == len(tr.entries)
    replay = ReplayBackend.from_paths([path])
    assert replay.complete(REQ) == "recorded"
    assert replay.complete(REQ) == replay.complete(REQ)


def test_strict_replay_miss_raises():
    replay = ReplayBackend([], strict=True)
    with pytest.raises(BackendUnavailable):
        replay.complete(REQ)


def test_non_strict_replay_falls_back_and_records(tmp_path):
    fallback, _ = live(lambda r: ok("fresh"))
    replay = ReplayBackend([], strict=False, fallback=fallback)
    tr = Transcript(tmp_path / "t.jsonl")
    assert replay.complete(REQ, tr) == "fresh"
    assert tr.entries[0].meta["cache"] == "miss"
