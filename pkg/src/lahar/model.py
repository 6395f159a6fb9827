"""Shared domain types.

Timestamps are plain ``int`` seconds since the house epoch
(``day_index * 86400 + second_of_day``); :func:`format_ts` and
:func:`parse_ts` convert to and from clock text.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Sequence

SECONDS_PER_DAY = 86400
UNASSIGNED = "Unassigned"
OTHER_ACTIVITY = 0

_CLOCK_RE = re.compile(r"^\s*(?:(\d+)\s*/\s*)?(\d{1,2}):(\d{2}):(\d{2})\s*$")


class BadTimestamp(ValueError):
    """Clock text that cannot be turned into seconds."""


def format_ts(t: int, base_day: int = 0) -> str:
    """Render ``t`` as ``HH:MM:SS`` on ``base_day``, else ``D/HH:MM:SS``."""
    if t < 0:
        raise ValueError(f"negative timestamp {t}")
    day, sec = divmod(int(t), SECONDS_PER_DAY)
    h, rem = divmod(sec, 3600)
    m, s = divmod(rem, 60)
    clock = f"{h:02d}:{m:02d}:{s:02d}"
    return clock if day == base_day else f"{day}/{clock}"


def parse_ts(text: str, base_day: int = 0) -> int:
    match = _CLOCK_RE.match(str(text))
    if not match:
        raise BadTimestamp(str(text))
    day_s, h, m, s = match.groups()
    h, m, s = int(h), int(m), int(s)
    # 24:00:00 is accepted as the end of day (models emit it for "midnight").
    if m > 59 or s > 59 or h > 24 or (h == 24 and (m or s)):
        raise BadTimestamp(str(text))
    day = int(day_s) if day_s is not None else base_day
    return day * SECONDS_PER_DAY + h * 3600 + m * 60 + s


def day_of(t: int) -> int:
    return int(t) // SECONDS_PER_DAY


class Change(str, Enum):
    ON = "ON"
    OFF = "OFF"


class Scenario(str, Enum):
    SINGLE = "SINGLE"
    MULTI = "MULTI"


@dataclass(frozen=True)
class SensorEvent:
    t: int
    sensor: str
    change: Change

    def __post_init__(self) -> None:
        if self.t < 0:
            raise ValueError(f"negative event time {self.t}")
        if not isinstance(self.change, Change):
            object.__setattr__(self, "change", Change(self.change))


@dataclass(frozen=True)
class EventPair:
    start: int
    end: int
    sensor: str
    location: str
    # "open" / "close" when a boundary of the segment stands in for a missing event
    synthetic: Optional[str] = None

    def __post_init__(self) -> None:
        if self.start > self.end:
            raise ValueError(f"pair for {self.sensor} starts after it ends ({self.start} > {self.end})")


@dataclass(frozen=True)
class SensorMeta:
    id: str
    kind: str
    room: str
    furniture: str = ""
    description: str = ""


@dataclass(frozen=True)
class Room:
    name: str
    furniture: tuple[str, ...] = ()
    sensors: tuple[str, ...] = ()


@dataclass(frozen=True)
class Activity:
    id: int
    label: str
    habit: str = ""


@dataclass(frozen=True)
class HouseContext:
    house_id: str
    residents: tuple[str, ...]
    rooms: tuple[Room, ...]
    sensors: tuple[SensorMeta, ...]
    activities: tuple[Activity, ...]
    schedule: Mapping[str, str] = field(default_factory=dict)
    background: str = ""

    @property
    def sensor_ids(self) -> list[str]:
        return [s.id for s in self.sensors]

    def sensor(self, sensor_id: str) -> SensorMeta:
        for s in self.sensors:
            if s.id == sensor_id:
                return s
        raise KeyError(sensor_id)

    def location_of(self, sensor_id: str) -> str:
        return self.sensor(sensor_id).room

    def activity_ids(self) -> list[int]:
        return [a.id for a in self.activities]

    def activity_label(self, activity_id: int) -> str:
        for a in self.activities:
            if a.id == activity_id:
                return a.label
        raise KeyError(activity_id)

    def with_residents(self, residents: Sequence[str]) -> "HouseContext":
        """Copy of the context restricted to ``residents`` (e.g. those at home)."""
        unknown = [r for r in residents if r not in self.residents]
        if unknown:
            raise KeyError(f"unknown residents {unknown}")
        kept = tuple(r for r in self.residents if r in residents)
        schedule = {k: v for k, v in self.schedule.items() if k in kept or k not in self.residents}
        return HouseContext(
            house_id=self.house_id,
            residents=kept,
            rooms=self.rooms,
            sensors=self.sensors,
            activities=self.activities,
            schedule=schedule,
            background=self.background,
        )


def validate_house_context(ctx: HouseContext) -> list[str]:
    """Return one message per violated invariant; empty when the context is sound."""
    problems: list[str] = []
    if len(ctx.residents) < 1:
        problems.append("residents: at least one resident is required")
    if len(set(ctx.residents)) != len(ctx.residents):
        problems.append("residents: duplicate resident names")
    seen: set[str] = set()
    for s in ctx.sensors:
        if s.id in seen:
            problems.append(f"duplicate sensor id {s.id}")
        seen.add(s.id)
    for room in ctx.rooms:
        for sid in room.sensors:
            if sid not in seen:
                problems.append(f"room '{room.name}' references unknown sensor {sid}")
    ids: set[int] = set()
    for a in ctx.activities:
        if a.id in ids:
            problems.append(f"duplicate activity id {a.id}")
        ids.add(a.id)
    if OTHER_ACTIVITY in ids and ctx.activity_label(OTHER_ACTIVITY).lower() != "other":
        problems.append("activity id 0 is reserved for 'Other'")
    if OTHER_ACTIVITY not in ids:
        problems.append("activity id 0 ('Other') is missing from the catalog")
    return problems


@dataclass(frozen=True)
class ActionDescription:
    start: int
    end: int
    last_states: Mapping[str, str]
    location: str
    subject: str
    description: str

    def __post_init__(self) -> None:
        if self.start > self.end:
            raise ValueError(f"description starts after it ends ({self.start} > {self.end})")


@dataclass(frozen=True)
class ReducedDescription:
    """The four keys kept when descriptions are handed to activity reasoning."""

    start: int
    end: int
    location: str
    description: str


@dataclass(frozen=True)
class ActivityRecord:
    start: int
    end: int
    duration: int
    last_activity: str
    reasoning: str
    activity: int

    def __post_init__(self) -> None:
        if self.start > self.end:
            raise ValueError(f"record starts after it ends ({self.start} > {self.end})")


@dataclass(frozen=True)
class TimelineEntry:
    start: int
    end: int
    activity: int


@dataclass(frozen=True)
class Timeline:
    subject: str
    entries: tuple[TimelineEntry, ...] = ()


@dataclass(frozen=True)
class LabelMap:
    raw_to_grouped: Mapping[int, int]
    dropped: frozenset[int] = frozenset()

    def __getitem__(self, raw: int) -> int:
        return self.raw_to_grouped[raw]

    def is_total_over(self, raw_ids) -> bool:
        return all(r in self.raw_to_grouped for r in raw_ids)


@dataclass(frozen=True)
class Segment:
    """A constant-presence slice of the sensor stream, ``span`` is half-open."""

    id: str
    house_id: str
    span: tuple[int, int]
    scenario: Scenario
    present_residents: tuple[str, ...]
    events: tuple[SensorEvent, ...] = ()
    pairs: tuple[EventPair, ...] = ()
    # resident -> grouped activity id per second of the span
    ground_truth: Optional[Mapping[str, Sequence[int]]] = None

    def __post_init__(self) -> None:
        lo, hi = self.span
        if lo > hi:
            raise ValueError(f"segment {self.id}: span start after end")
        if any(not (lo <= e.t < hi) for e in self.events):
            raise ValueError(f"segment {self.id}: event outside span")
        single = len(self.present_residents) == 1
        if single != (self.scenario is Scenario.SINGLE):
            raise ValueError(f"segment {self.id}: scenario {self.scenario.value} with {len(self.present_residents)} residents")

    @property
    def length(self) -> int:
        return self.span[1] - self.span[0]

    @property
    def base_day(self) -> int:
        return day_of(self.span[0])
