"""Prompt assembly for the description stage and the activity stage."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Sequence, TypeVar, Union

from .model import EventPair, HouseContext, ReducedDescription, format_ts
from .preprocess import render_pairs_json

NO_PRIOR_STATE = "no prior state"
NO_LAST_ACTIVITY = "none yet"
NO_SCHEDULE = "No schedule constraints are known for the residents."

STAGE1_TAIL_KEYS = ("location", "subject", "description")
STAGE2_KEYS = ("start", "end", "Duration", "Last_Activity", "Reasoning", "Activity")

T = TypeVar("T")


class EmptyChunk(ValueError):
    pass


@dataclass(frozen=True)
class ChunkMeta:
    segment_id: str
    stage: int
    chunk_index: int
    size: int
    subject: str = ""


@dataclass(frozen=True)
class PromptBundle:
    system: str
    user: str
    expected_keys: tuple[str, ...]
    chunk_meta: Optional[ChunkMeta] = None

    @property
    def text(self) -> str:
        return self.system + "\n\n" + self.user if self.system else self.user


@dataclass(frozen=True)
class Templates:
    stage1_system: str
    stage1_user: str
    stage2_system: str
    stage2_user: str
    # put context + instructions in the system message; False sends one user message
    use_system: bool = True

    @classmethod
    def load(cls, directory: Union[str, Path, None] = None, use_system: bool = True) -> "Templates":
        if directory is None:
            root = resources.files("lahar") / "templates"
            read = lambda name: (root / name).read_text(encoding="utf-8")  # noqa: E731
        else:
            read = lambda name: (Path(directory) / name).read_text(encoding="utf-8")  # noqa: E731
        return cls(
            read("stage1_system.txt"),
            read("stage1_user.txt"),
            read("stage2_system.txt"),
            read("stage2_user.txt"),
            use_system,
        )


def fill(template: str, values: Mapping[str, str]) -> str:
    out = template
    for key, val in values.items():
        out = out.replace("{{" + key + "}}", val)
    return out


def stage1_keys(residents: Sequence[str]) -> tuple[str, ...]:
    return ("start", "end", *(f"last state of {r}" for r in residents), *STAGE1_TAIL_KEYS)


def _background(ctx: HouseContext) -> str:
    names = ", ".join(ctx.residents)
    n = len(ctx.residents)
    who = "resident is" if n == 1 else "residents are"
    lines = [ctx.background.strip()] if ctx.background.strip() else []
    lines.append(f"{n} {who} at home during this period: {names}.")
    return "\n".join(lines)


def _house_layout(ctx: HouseContext) -> str:
    lines = []
    for room in ctx.rooms:
        furniture = ", ".join(room.furniture) or "none listed"
        sensors = ", ".join(room.sensors) or "none"
        lines.append(f"- {room.name}: furniture: {furniture}; sensors: {sensors}")
    return "\n".join(lines) or "- (no rooms listed)"


def _sensor_description(ctx: HouseContext) -> str:
    lines = []
    for s in ctx.sensors:
        where = f"{s.room} ({s.furniture})" if s.furniture else s.room
        line = f"- {s.id}: {s.kind} sensor in {where}."
        if s.description:
            line += f" {s.description.strip()}"
        lines.append(line)
    return "\n".join(lines)


def _activity_list(ctx: HouseContext) -> str:
    lines = []
    for a in ctx.activities:
        line = f"- {a.id}: {a.label}"
        if a.habit:
            line += f" ({a.habit.strip()})"
        lines.append(line)
    return "\n".join(lines)


def _user_schedule(ctx: HouseContext) -> str:
    blocks = [f"{who}: {text.strip()}" for who, text in ctx.schedule.items() if text.strip()]
    return "\n".join(blocks) if blocks else NO_SCHEDULE


def _examples(examples: Sequence[str]) -> str:
    if not examples:
        return "(none)"
    return "\n\n".join(f"Example {i}:\n{ex.strip()}" for i, ex in enumerate(examples, start=1))


def build_stage1_context(ctx: HouseContext) -> str:
    return (
        f"## Background\n{_background(ctx)}\n\n"
        f"## House Layout\n{_house_layout(ctx)}\n\n"
        f"## Sensor Description\n{_sensor_description(ctx)}"
    )


def build_stage2_context(ctx: HouseContext) -> str:
    return (
        f"## Sensor Description\n{_sensor_description(ctx)}\n\n"
        f"## Activity List\n{_activity_list(ctx)}\n\n"
        f"## User Schedule\n{_user_schedule(ctx)}"
    )


def chunk(items: Sequence[T], n: int) -> list[list[T]]:
    """Consecutive slices of ``n`` items; the last one holds the remainder."""
    if n < 1:
        raise ValueError("chunk size must be >= 1")
    return [list(items[i : i + n]) for i in range(0, len(items), n)]


chunk_pairs = chunk


@dataclass
class CarryOver:
    states: dict[str, str] = field(default_factory=dict)

    @classmethod
    def initial(cls, residents: Sequence[str]) -> "CarryOver":
        return cls({r: NO_PRIOR_STATE for r in residents})

    def render(self, residents: Sequence[str]) -> str:
        return json.dumps({r: self.states.get(r, NO_PRIOR_STATE) for r in residents}, indent=2, ensure_ascii=False)


def _response_skeleton(keys: Sequence[str]) -> str:
    return "{" + ", ".join(json.dumps(k) + ": ..." for k in keys) + "}"


def _bundle(templates: Templates, system: str, user: str, keys, meta) -> PromptBundle:
    if templates.use_system:
        return PromptBundle(system, user, tuple(keys), meta)
    return PromptBundle("", system + "\n\n" + user, tuple(keys), meta)


def build_stage1_prompt(
    ctx: HouseContext,
    pairs: Sequence[EventPair],
    carry: CarryOver,
    examples: Sequence[str] = (),
    templates: Optional[Templates] = None,
    base_day: int = 0,
    meta: Optional[ChunkMeta] = None,
) -> PromptBundle:
    if not pairs:
        raise EmptyChunk("stage-1 chunk has no event pairs")
    templates = templates or default_templates()
    keys = stage1_keys(ctx.residents)
    system = fill(
        templates.stage1_system,
        {
            "background": _background(ctx),
            "house_layout": _house_layout(ctx),
            "sensor_description": _sensor_description(ctx),
            "response_keys": _response_skeleton(keys),
            "subjects": ", ".join(json.dumps(r) for r in ctx.residents),
        },
    )
    user = fill(
        templates.stage1_user,
        {
            "examples": _examples(examples),
            "carry_over": carry.render(ctx.residents),
            "input": render_pairs_json(pairs, base_day),
        },
    )
    return _bundle(templates, system.rstrip("\n"), user.rstrip("\n"), keys, meta)


def reduced_to_json(d: ReducedDescription, base_day: int = 0) -> dict:
    return {
        "start": format_ts(d.start, base_day),
        "end": format_ts(d.end, base_day),
        "location": d.location,
        "description": d.description,
    }


def build_stage2_prompt(
    ctx: HouseContext,
    descriptions: Sequence[ReducedDescription],
    last_activity: str,
    examples: Sequence[str] = (),
    subject: str = "",
    templates: Optional[Templates] = None,
    base_day: int = 0,
    meta: Optional[ChunkMeta] = None,
) -> PromptBundle:
    if not descriptions:
        raise EmptyChunk("stage-2 chunk has no descriptions")
    templates = templates or default_templates()
    system = fill(
        templates.stage2_system,
        {
            "sensor_description": _sensor_description(ctx),
            "activity_list": _activity_list(ctx),
            "user_schedule": _user_schedule(ctx),
            "response_keys": _response_skeleton(STAGE2_KEYS),
        },
    )
    body = ",\n".join(
        "  " + json.dumps(reduced_to_json(d, base_day), ensure_ascii=False) for d in descriptions
    )
    user = fill(
        templates.stage2_user,
        {
            "examples": _examples(examples),
            "last_activity": last_activity or NO_LAST_ACTIVITY,
            "subject": subject or "the resident",
            "input": "[\n" + body + "\n]",
        },
    )
    return _bundle(templates, system.rstrip("\n"), user.rstrip("\n"), STAGE2_KEYS, meta)


_DEFAULT: Optional[Templates] = None


def default_templates() -> Templates:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = Templates.load()
    return _DEFAULT


def load_examples(path: Union[str, Path, None]) -> list[str]:
    """Few-shot examples file; examples are separated by lines of ``===``."""
    if not path:
        return []
    text = Path(path).read_text(encoding="utf-8")
    parts = [p.strip() for p in text.split("\n===\n")]
    return [p for p in parts if p and not p.startswith("#")]
