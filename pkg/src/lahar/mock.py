"""Deterministic stand-in for the language model.

The scripted backend reads the input block back out of the prompt and answers
with simple rules, so the whole pipeline can run offline:

* description stage: consecutive pairs in the same room, at most 60 s apart,
  form one group; a group goes to the resident last seen in that room, else to
  the lowest-numbered resident not busy elsewhere during the group, else
  ``Unassigned``.
* activity stage: each description is mapped to an activity through keyword
  rules on room, furniture and time of day; neighbouring descriptions with the
  same activity are merged.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .llm import Backend, CompletionRequest
from .model import UNASSIGNED, HouseContext, format_ts, parse_ts
from .parsing import extract_json_array
from .promptgen import NO_PRIOR_STATE, STAGE2_KEYS, stage1_keys

MERGE_GAP = 60
STAGE2_MERGE_GAP = 600
REPAIR_HEADING = "## Repair"


@dataclass
class Group:
    start: int
    end: int
    location: str
    sensors: list[str]
    subject: str = UNASSIGNED


def merge_pairs(pairs: Sequence[dict], gap: int = MERGE_GAP) -> list[Group]:
    """Merge each pair into the previous group when the room matches and the gap is <= ``gap``."""
    groups: list[Group] = []
    for p in pairs:
        prev = groups[-1] if groups else None
        if prev and prev.location == p["location"] and p["start"] - prev.end <= gap:
            prev.end = max(prev.end, p["end"])
            if p["sensor"] not in prev.sensors:
                prev.sensors.append(p["sensor"])
        else:
            groups.append(Group(p["start"], p["end"], p["location"], [p["sensor"]]))
    return groups


def _overlaps(a: Group, b: Group) -> bool:
    return a.start <= b.end and b.start <= a.end


def assign_subjects(groups: list[Group], residents: Sequence[str], last_location: dict) -> None:
    last = dict(last_location)
    done: list[Group] = []
    for g in groups:
        subject = next((r for r in residents if last.get(r) == g.location), None)
        if subject is None:
            for r in residents:
                busy = any(h.subject == r and h.location != g.location and _overlaps(h, g) for h in done)
                if not busy:
                    subject = r
                    break
        g.subject = subject or UNASSIGNED
        if subject:
            last[subject] = g.location
        done.append(g)


def describe(group: Group, ctx: HouseContext) -> str:
    things = []
    for sid in group.sensors:
        try:
            meta = ctx.sensor(sid)
        except KeyError:
            things.append(sid)
            continue
        things.append(f"{meta.furniture or meta.kind} ({sid})")
    return f"Activity in {group.location} involving {', '.join(things)}."


# (activity id, room keyword, sensor/furniture keyword or "", hour range or None, min duration s)
DEFAULT_RULES: tuple = (
    (9, "bedroom", "bed", None, 3600),
    (17, "bedroom", "wardrobe", None, 0),
    (11, "bathroom", "shower", None, 0),
    (12, "bathroom", "water closet", None, 0),
    (12, "bathroom", "toilet", None, 0),
    (15, "bathroom", "tap", None, 0),
    (15, "bathroom", "sink", None, 0),
    (1, "kitchen", "", (5, 11), 0),
    (3, "kitchen", "", (11, 15), 0),
    (5, "kitchen", "", (17, 22), 0),
    (8, "kitchen", "", None, 0),
    (10, "living", "couch", None, 0),
    (10, "living", "tv", None, 0),
    (13, "living", "chair", None, 0),
)


def classify(desc: dict, ctx: HouseContext, rules=DEFAULT_RULES) -> int:
    """Activity id for one reduced description; 0 when no rule fires."""
    loc = desc["location"].lower()
    text = desc["description"].lower()
    words = text
    for sid in re.findall(r"\(([^()]+)\)", desc["description"]):
        try:
            meta = ctx.sensor(sid)
            words += f" {meta.furniture.lower()} {meta.kind.lower()}"
        except KeyError:
            pass
    hour = (desc["start"] % 86400) // 3600
    duration = desc["end"] - desc["start"]
    for activity, room, kw, hours, min_dur in rules:
        if room not in loc:
            continue
        if kw and kw not in words:
            continue
        if hours and not (hours[0] <= hour < hours[1]):
            continue
        if duration < min_dur:
            continue
        if activity in ctx.activity_ids():
            return activity
    return 0


def _section(user: str, heading: str) -> str:
    body = user.split("\n" + REPAIR_HEADING, 1)[0]
    idx = body.rfind(heading)
    if idx == -1:
        raise ValueError(f"prompt has no {heading!r} section")
    rest = body[idx + len(heading) :]
    nxt = rest.find("\n## ")
    return rest if nxt == -1 else rest[:nxt]


class ScriptedBackend(Backend):
    """Rule-based backend that answers both prompt kinds deterministically.

    ``adversarial`` makes the formatting of replies vary (code fences, prose,
    trailing commas, label-form activities) as a function of the request digest.
    ``break_when`` picks requests whose reply drops the ``subject`` /
    ``Activity`` key, including the repair reply.
    """

    name = "mock"

    def __init__(
        self,
        ctx: HouseContext,
        adversarial: bool = False,
        break_when: Optional[Callable[[CompletionRequest], bool]] = None,
        rules=DEFAULT_RULES,
    ) -> None:
        self.ctx = ctx
        self.adversarial = adversarial
        self.break_when = break_when
        self.rules = rules

    def _complete(self, req: CompletionRequest) -> tuple[str, dict]:
        text = req.system + "\n\n" + req.user
        if "## Previous State" in text:
            return self.respond_stage1(req), {}
        if "## Last Activity" in text:
            return self.respond_stage2(req), {}
        return "I do not understand the request.", {}

    def _variant(self, req: CompletionRequest) -> int:
        if not self.adversarial:
            return 0
        return int(hashlib.sha256(req.user.encode("utf-8")).hexdigest()[:8], 16) % 4

    def _residents(self, text: str) -> list[str]:
        found = re.findall(r'"last state of ([^"]+)"', _section(text, "## Response Format"))
        return list(dict.fromkeys(found)) or list(self.ctx.residents)

    def respond_stage1(self, req: CompletionRequest) -> str:
        text = req.system + "\n\n" + req.user
        residents = self._residents(text)
        raw = extract_json_array(_section(text, "## Input"))
        carry = json.loads(_section(text, "## Previous State").strip())
        pairs = [
            {
                "start": parse_ts(p["start"]),
                "end": parse_ts(p["end"]),
                "sensor": p["event"].split()[0],
                "location": p["location"],
            }
            for p in raw
        ]
        rows = scripted_stage1(pairs, self.ctx, residents, carry)
        if self.break_when and self.break_when(req):
            for r in rows:
                r.pop("subject", None)
        return self._format(rows, req)

    def respond_stage2(self, req: CompletionRequest) -> str:
        # Clock text without a day prefix is read as day 0 and written back the
        # same way, so the caller's own base day survives the round trip.
        text = req.system + "\n\n" + req.user
        raw = extract_json_array(_section(text, "## Input"))
        last = _section(text, "## Last Activity").strip()
        descs = [{**d, "start": parse_ts(d["start"]), "end": parse_ts(d["end"])} for d in raw]
        rows = scripted_stage2(descs, self.ctx, last, self.rules)
        variant = self._variant(req)
        for r in rows:
            if variant == 1:
                r["Activity"] = self.ctx.activity_label(r["Activity"])
            elif variant == 2:
                r["Activity"] = f"{r['Activity']}: {self.ctx.activity_label(r['Activity'])}"
        if self.break_when and self.break_when(req):
            for r in rows:
                r.pop("Activity", None)
        return self._format(rows, req)

    def _format(self, rows: list[dict], req: CompletionRequest) -> str:
        body = json.dumps(rows, indent=2, ensure_ascii=False)
        variant = self._variant(req)
        if variant == 1:
            return f"```json\n{body}\n```"
        if variant == 2:
            return "Here is the result:\n" + re.sub(r"\n(\s*)\}", r",\n\1}", body).replace("\n]", ",\n]")
        if variant == 3:
            return f"Sure. The grouped output follows.\n```\n{body}\n```\nLet me know if anything is unclear."
        return body


def _location_from_state(state: str, rooms: Sequence[str]) -> Optional[str]:
    m = re.search(r"in ([^,.]+?) involving", state)
    if m and m.group(1) in rooms:
        return m.group(1)
    return None


def scripted_stage1(
    pairs: Sequence[dict],
    ctx: HouseContext,
    residents: Sequence[str],
    carry: dict,
) -> list[dict]:
    """Rows for one chunk of pairs (times in seconds) following the module rules."""
    rooms = [r.name for r in ctx.rooms] + sorted({s.room for s in ctx.sensors})
    last_loc = {}
    for r in residents:
        loc = _location_from_state(carry.get(r, ""), rooms)
        if loc:
            last_loc[r] = loc
    groups = merge_pairs(pairs)
    assign_subjects(groups, residents, last_loc)
    state = {r: carry.get(r, NO_PRIOR_STATE) for r in residents}
    rows = []
    keys = stage1_keys(residents)
    for g in groups:
        text = describe(g, ctx)
        row = {"start": format_ts(g.start), "end": format_ts(g.end)}
        for r in residents:
            row[f"last state of {r}"] = state[r]
        row["location"] = g.location
        row["subject"] = g.subject
        row["description"] = text
        assert list(row) == list(keys)
        rows.append(row)
        if g.subject in state:
            state[g.subject] = text
    return rows


def scripted_stage2(
    descs: Sequence[dict],
    ctx: HouseContext,
    last_activity: str,
    rules=DEFAULT_RULES,
) -> list[dict]:
    merged: list[dict] = []
    for d in descs:
        act = classify(d, ctx, rules)
        prev = merged[-1] if merged else None
        if prev and prev["activity"] == act and d["start"] - prev["end"] <= STAGE2_MERGE_GAP:
            prev["end"] = max(prev["end"], d["end"])
        else:
            merged.append({"start": d["start"], "end": d["end"], "activity": act})
    rows = []
    last = last_activity
    for m in merged:
        label = ctx.activity_label(m["activity"])
        rows.append(
            dict(
                zip(
                    STAGE2_KEYS,
                    (
                        format_ts(m["start"]),
                        format_ts(m["end"]),
                        format_ts(m["end"] - m["start"]),
                        last,
                        f"Matched the rule for {label}.",
                        m["activity"],
                    ),
                )
            )
        )
        last = f"{m['activity']}: {label}"
    return rows
