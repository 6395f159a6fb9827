"""Extracting and validating the JSON arrays that the model returns."""

from __future__ import annotations

import json
import logging
import re
from typing import Any

from .model import (
    SECONDS_PER_DAY,
    UNASSIGNED,
    ActionDescription,
    ActivityRecord,
    BadTimestamp,
    HouseContext,
    parse_ts,
)
from .promptgen import STAGE2_KEYS

logger = logging.getLogger(__name__)

_FENCE_RE = re.compile(r"```[a-zA-Z0-9_-]*\s*\n?(.*?)```", re.DOTALL)
_UNASSIGNED_WORDS = {"unassigned", "unknown", "none", "n/a", "na", "nobody", ""}


class ResponseError(ValueError):
    pass


class NoJsonFound(ResponseError):
    pass


class MissingKey(ResponseError):
    def __init__(self, key: str, index: int = 0) -> None:
        super().__init__(f"object {index} is missing key {key!r}")
        self.key = key


class UnknownSubject(ResponseError):
    pass


class UnknownActivity(ResponseError):
    pass


def _balanced_span(text: str, start: int) -> int:
    """Index one past the bracket closing ``text[start]``, or -1."""
    pairs = {"[": "]", "{": "}"}
    stack = [pairs[text[start]]]
    in_str = esc = False
    for i in range(start + 1, len(text)):
        ch = text[i]
        if in_str:
            if esc:
                esc = False
            elif ch == "\\":
                esc = True
            elif ch == '"':
                in_str = False
        elif ch == '"':
            in_str = True
        elif ch in pairs:
            stack.append(pairs[ch])
        elif ch in "]}":
            if not stack or ch != stack.pop():
                return -1
            if not stack:
                return i + 1
    return -1


def strip_trailing_commas(text: str) -> str:
    """Drop commas that directly precede ``]`` or ``}`` outside of strings."""
    out: list[str] = []
    in_str = esc = False
    pending: list[str] = []  # a comma plus any whitespace after it
    for ch in text:
        if in_str:
            out.append(ch)
            if esc:
                esc = False
            elif ch == "\\":
                esc = True
            elif ch == '"':
                in_str = False
            continue
        if pending:
            if ch.isspace():
                pending.append(ch)
                continue
            if ch in "]}":
                out.extend(pending[1:])
            else:
                out.extend(pending)
            pending = []
        if ch == ",":
            pending = [ch]
            continue
        out.append(ch)
        if ch == '"':
            in_str = True
    out.extend(pending)
    return "".join(out)


def extract_json_array(text: str) -> list[Any]:
    """First JSON array in ``text``; fences, leading prose and trailing commas are tolerated.

    A lone top-level object is accepted as a one-element array.
    """
    candidates = [m.group(1) for m in _FENCE_RE.finditer(text)] + [text]
    for cand in candidates:
        for opener in ("[", "{"):
            pos = cand.find(opener)
            while pos != -1:
                end = _balanced_span(cand, pos)
                if end != -1:
                    chunk = cand[pos:end]
                    for attempt in (chunk, strip_trailing_commas(chunk)):
                        try:
                            value = json.loads(attempt)
                        except json.JSONDecodeError:
                            continue
                        if isinstance(value, list):
                            return value
                        if isinstance(value, dict):
                            return [value]
                pos = cand.find(opener, pos + 1)
    raise NoJsonFound("no JSON array found in response")


def _require(obj: Any, keys, index: int) -> None:
    if not isinstance(obj, dict):
        raise ResponseError(f"element {index} is not an object")
    for k in keys:
        if k not in obj:
            raise MissingKey(k, index)


def _squash(s: str) -> str:
    return re.sub(r"[\s_\-.:]+", "", str(s).lower())


def normalize_subject(value: Any, ctx: HouseContext) -> str:
    raw = "" if value is None else str(value).strip()
    key = _squash(raw)
    if key in _UNASSIGNED_WORDS:
        return UNASSIGNED
    table = {_squash(r): r for r in ctx.residents}
    if key in table:
        return table[key]
    m = re.fullmatch(r"(?:user|resident|subject|person)?(\d+)", key)
    if m:
        hit = table.get(f"user{m.group(1)}")
        if hit:
            return hit
    raise UnknownSubject(f"unknown subject {raw!r}; expected one of {list(ctx.residents)}")


def normalize_activity(value: Any, ctx: HouseContext) -> int:
    ids = set(ctx.activity_ids())
    if isinstance(value, bool):
        raise UnknownActivity(repr(value))
    if isinstance(value, (int, float)) and int(value) == value and int(value) in ids:
        return int(value)
    text = str(value).strip()
    m = re.match(r"^\s*(?:id\s*)?(\d+)\b", text, re.IGNORECASE)
    if m and int(m.group(1)) in ids:
        return int(m.group(1))
    label = _squash(re.sub(r"^\s*(?:id\s*)?\d+\s*[:\-.)]?\s*", "", text, flags=re.IGNORECASE))
    for a in ctx.activities:
        if _squash(a.label) == label:
            return a.id
    raise UnknownActivity(f"unknown activity {value!r}")


def _ts(value: Any, base_day: int) -> int:
    return parse_ts(str(value), base_day)


def _interval(obj: dict, base_day: int, index: int) -> tuple[int, int]:
    start, end = _ts(obj["start"], base_day), _ts(obj["end"], base_day)
    # a bare clock that went backwards crossed midnight
    if end < start and "/" not in str(obj["end"]) and end + SECONDS_PER_DAY >= start:
        end += SECONDS_PER_DAY
    if start > end:
        raise BadTimestamp(f"object {index}: end {obj['end']} before start {obj['start']}")
    return start, end


def parse_stage1_response(text: str, ctx: HouseContext, base_day: int = 0) -> list[ActionDescription]:
    items = extract_json_array(text)
    keys = ("start", "end", *(f"last state of {r}" for r in ctx.residents), "location", "subject", "description")
    out = []
    for i, obj in enumerate(items):
        _require(obj, keys, i)
        start, end = _interval(obj, base_day, i)
        out.append(
            ActionDescription(
                start=start,
                end=end,
                last_states={r: str(obj[f"last state of {r}"]) for r in ctx.residents},
                location=str(obj["location"]),
                subject=normalize_subject(obj["subject"], ctx),
                description=str(obj["description"]),
            )
        )
    return out


def _duration_seconds(value: Any):
    if isinstance(value, (int, float)):
        return int(value)
    try:
        return parse_ts(str(value))
    except BadTimestamp:
        return None


def parse_stage2_response(text: str, ctx: HouseContext, base_day: int = 0) -> list[ActivityRecord]:
    items = extract_json_array(text)
    out = []
    for i, obj in enumerate(items):
        _require(obj, STAGE2_KEYS, i)
        start, end = _interval(obj, base_day, i)
        claimed = _duration_seconds(obj["Duration"])
        if claimed is not None and claimed != end - start:
            logger.info("duration mismatch: model said %s, span is %ds", obj["Duration"], end - start)
        out.append(
            ActivityRecord(
                start=start,
                end=end,
                duration=end - start,
                last_activity=str(obj["Last_Activity"]),
                reasoning=str(obj["Reasoning"]),
                activity=normalize_activity(obj["Activity"], ctx),
            )
        )
    return out
