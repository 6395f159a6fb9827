"""Readings to sensor events to structured event pairs."""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np

from .ingest import DayRows
from .model import Change, EventPair, HouseContext, SensorEvent, format_ts


class UnknownSensor(KeyError):
    pass


class FilterKind(str, Enum):
    DROP_ALWAYS = "DROP_ALWAYS"
    DROP_UNLESS_COACTIVE = "DROP_UNLESS_COACTIVE"


@dataclass(frozen=True)
class FilterRule:
    kind: FilterKind
    sensor: str
    coactive_set: frozenset[str] = field(default_factory=frozenset)
    window: int = 300

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", FilterKind(self.kind))
        object.__setattr__(self, "coactive_set", frozenset(self.coactive_set))
        if self.kind is FilterKind.DROP_UNLESS_COACTIVE and self.window <= 0:
            raise ValueError("window must be positive for DROP_UNLESS_COACTIVE")


def detect_events(rows: DayRows, ctx: HouseContext) -> list[SensorEvent]:
    """One event per 0->1 / 1->0 change; the first row only sets the initial state."""
    if len(rows) < 2:
        return []
    ids = ctx.sensor_ids
    diff = np.diff(rows.values.astype(np.int8), axis=0)
    # row-major nonzero order is (time, column), which is the tie rule we want
    r, c = np.nonzero(diff)
    times = rows.t[1:][r]
    return [
        SensorEvent(int(t), ids[col], Change.ON if d > 0 else Change.OFF)
        for t, col, d in zip(times.tolist(), c.tolist(), diff[r, c].tolist())
    ]


def debounce(events: Sequence[SensorEvent]) -> list[SensorEvent]:
    """Collapse each uninterrupted run of >= 3 events of one sensor to its first and last."""
    out: list[SensorEvent] = []
    i, n = 0, len(events)
    while i < n:
        j = i
        while j + 1 < n and events[j + 1].sensor == events[i].sensor:
            j += 1
        if j - i + 1 >= 3:
            out.append(events[i])
            out.append(events[j])
        else:
            out.extend(events[i : j + 1])
        i = j + 1
    return out


def apply_filters(
    events: Sequence[SensorEvent],
    rules: Iterable[FilterRule],
    known_sensors: Optional[Iterable[str]] = None,
) -> list[SensorEvent]:
    rules = list(rules)
    if known_sensors is not None:
        known = set(known_sensors)
        for rule in rules:
            for sid in {rule.sensor, *rule.coactive_set}:
                if sid not in known:
                    raise UnknownSensor(f"filter rule references unknown sensor {sid}")
    always = {r.sensor for r in rules if r.kind is FilterKind.DROP_ALWAYS}
    windowed: dict[str, list[FilterRule]] = {}
    for r in rules:
        if r.kind is FilterKind.DROP_UNLESS_COACTIVE:
            windowed.setdefault(r.sensor, []).append(r)

    times_by_sensor: dict[str, list[int]] = {}
    for e in events:
        times_by_sensor.setdefault(e.sensor, []).append(e.t)

    def coactive(t: int, rule: FilterRule) -> bool:
        for sid in rule.coactive_set:
            ts = times_by_sensor.get(sid)
            if not ts:
                continue
            k = bisect.bisect_left(ts, t - rule.window)
            if k < len(ts) and ts[k] <= t + rule.window:
                return True
        return False

    kept = []
    for e in events:
        if e.sensor in always:
            continue
        if e.sensor in windowed and not all(coactive(e.t, r) for r in windowed[e.sensor]):
            continue
        kept.append(e)
    return kept


def pair_events(
    events: Sequence[SensorEvent],
    ctx: HouseContext,
    span: Optional[tuple[int, int]] = None,
) -> list[EventPair]:
    """Match each ON with the next OFF of the same sensor.

    ``span`` is the half-open segment window. A trailing ON closes at its end
    (``synthetic="close"``); a leading OFF opens at its start (``synthetic="open"``).
    A repeated ON while open is absorbed; an OFF after a closed pair extends
    that pair, since debouncing leaves such first/last couples behind.
    """
    if span is None:
        if not events:
            return []
        span = (min(e.t for e in events), max(e.t for e in events) + 1)
    t_s, t_e = span
    open_at: dict[str, int] = {}
    closed: dict[str, list[list]] = {}
    seen: set[str] = set()
    for e in events:
        sid = e.sensor
        done = closed.setdefault(sid, [])
        if e.change is Change.ON:
            open_at.setdefault(sid, e.t)
        elif sid in open_at:
            done.append([open_at.pop(sid), e.t, None])
        elif sid not in seen:
            done.append([t_s, e.t, "open"])
        elif done:
            done[-1][1] = e.t
        seen.add(sid)
    for sid, t_on in open_at.items():
        closed[sid].append([t_on, max(t_e, t_on), "close"])
    pairs = [
        EventPair(start, end, sid, ctx.location_of(sid), synthetic)
        for sid, spans in closed.items()
        for start, end, synthetic in spans
    ]
    pairs.sort(key=lambda p: (p.start, p.sensor))
    return pairs


def pair_to_json(p: EventPair, base_day: int = 0) -> dict:
    return {
        "start": format_ts(p.start, base_day),
        "end": format_ts(p.end, base_day),
        "event": f"{p.sensor} ON and OFF",
        "location": p.location,
    }


def render_pairs_json(pairs: Sequence[EventPair], base_day: int = 0) -> str:
    """Stage-1 input block: one object per pair, sorted by start time."""
    ordered = sorted(pairs, key=lambda p: (p.start, p.sensor))
    if not ordered:
        return "[]"
    body = ",\n".join("  " + json.dumps(pair_to_json(p, base_day)) for p in ordered)
    return "[\n" + body + "\n]"


def events_csv(events: Sequence[SensorEvent], base_day: int = 0) -> str:
    lines = ["t,sensor,change"]
    lines += [f"{format_ts(e.t, base_day)},{e.sensor},{e.change.value}" for e in events]
    return "\n".join(lines) + "\n"


def preprocess(
    rows: DayRows,
    ctx: HouseContext,
    rules: Sequence[FilterRule] = (),
    span: Optional[tuple[int, int]] = None,
) -> tuple[list[SensorEvent], list[EventPair]]:
    """Detect, filter, debounce and pair; returns the kept events and the pairs."""
    events = detect_events(rows, ctx)
    events = apply_filters(events, rules, ctx.sensor_ids)
    events = debounce(events)
    if span is None and len(rows):
        span = (int(rows.t[0]), int(rows.t[-1]) + 1)
    return events, pair_events(events, ctx, span)
