"""Running both prompt stages over a segment and assembling activity timelines."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .llm import Backend, BackendUnavailable, CompletionRequest, ContextTooLong, RateLimited, Transcript
from .model import (
    UNASSIGNED,
    ActionDescription,
    ActivityRecord,
    BadTimestamp,
    EventPair,
    HouseContext,
    ReducedDescription,
    Segment,
    Timeline,
    TimelineEntry,
    format_ts,
)
from .parsing import ResponseError, parse_stage1_response, parse_stage2_response
from .promptgen import (
    NO_LAST_ACTIVITY,
    CarryOver,
    ChunkMeta,
    PromptBundle,
    Templates,
    build_stage1_prompt,
    build_stage2_prompt,
    chunk,
    default_templates,
)

logger = logging.getLogger(__name__)

REPAIR_HEADING = "## Repair"


@dataclass
class RunSettings:
    n: int = 20
    m: int = 15
    model: str = "gpt-4-32k-0613"
    temperature: float = 0.0
    max_output_tokens: int = 4096
    stage1_examples: Sequence[str] = ()
    stage2_examples: Sequence[str] = ()
    templates: Optional[Templates] = None
    # "all": unassigned descriptions go to every resident; "drop": discard them
    unassigned: str = "all"


@dataclass
class StageRunResult:
    segment_id: str
    stage: int
    descriptions: list[ActionDescription] = field(default_factory=list)
    records: dict[str, list[ActivityRecord]] = field(default_factory=dict)
    # stage 1: (chunk, error); stage 2: (subject, chunk, error). Chunks count from 1.
    failed_chunks: list[tuple] = field(default_factory=list)
    calls: int = 0


def _request(bundle: PromptBundle, settings: RunSettings) -> CompletionRequest:
    return CompletionRequest(
        model=settings.model,
        system=bundle.system,
        user=bundle.user,
        temperature=settings.temperature,
        max_output_tokens=settings.max_output_tokens,
    )


def repair_request(req: CompletionRequest, response: str, error: Exception) -> CompletionRequest:
    user = (
        f"{req.user}\n\n{REPAIR_HEADING}\n"
        f"Your previous reply could not be used: {error}\n"
        f"Previous reply:\n{response}\n\n"
        "Reply again with the corrected JSON array only."
    )
    return CompletionRequest(req.model, req.system, user, req.temperature, req.max_output_tokens)


def _ask(backend: Backend, req: CompletionRequest, parse, transcript, result: StageRunResult):
    """One request plus at most one repair round-trip; returns rows or raises the last error."""
    try:
        text = backend.complete(req, transcript)
    finally:
        result.calls += 1
    try:
        return parse(text)
    except (ResponseError, BadTimestamp) as err:
        logger.info("%s: unusable reply (%s), asking for a repair", result.segment_id, err)
        retry = repair_request(req, text, err)
        try:
            text = backend.complete(retry, transcript)
        finally:
            result.calls += 1
        return parse(text)


def run_stage1(
    segment_id: str,
    pairs: Sequence[EventPair],
    ctx: HouseContext,
    backend: Backend,
    settings: RunSettings,
    base_day: int = 0,
    transcript: Optional[Transcript] = None,
) -> StageRunResult:
    """Chunk the pairs, ask for descriptions chunk by chunk, carrying each resident's last description."""
    templates = settings.templates or default_templates()
    result = StageRunResult(segment_id, 1)
    carry = CarryOver.initial(ctx.residents)
    chunks = chunk(pairs, settings.n)
    for idx, part in enumerate(chunks, start=1):
        bundle = build_stage1_prompt(
            ctx, part, carry, settings.stage1_examples, templates, base_day,
            ChunkMeta(segment_id, 1, idx, len(part)),
        )
        try:
            rows = _ask(
                backend, _request(bundle, settings),
                lambda text: parse_stage1_response(text, ctx, base_day), transcript, result,
            )
        except (ResponseError, BadTimestamp, ContextTooLong) as err:
            logger.warning("%s: stage 1 chunk %d/%d failed: %s", segment_id, idx, len(chunks), err)
            result.failed_chunks.append((idx, str(err)))
            continue
        except RateLimited as err:
            raise BackendUnavailable(f"rate limited: {err}") from err
        rows.sort(key=lambda d: (d.start, d.end))
        result.descriptions.extend(rows)
        states = dict(carry.states)
        for d in rows:
            if d.subject in states:
                states[d.subject] = d.description
        carry = CarryOver(states)
    return result


def reduce_description(d: ActionDescription) -> ReducedDescription:
    return ReducedDescription(d.start, d.end, d.location, d.description)


def split_by_subject(
    descriptions: Sequence[ActionDescription],
    residents: Sequence[str],
    unassigned: str = "all",
) -> dict[str, list[ReducedDescription]]:
    out: dict[str, list[ReducedDescription]] = {r: [] for r in residents}
    for d in descriptions:
        if d.subject == UNASSIGNED:
            if unassigned == "all":
                for r in residents:
                    out[r].append(reduce_description(d))
        elif d.subject in out:
            out[d.subject].append(reduce_description(d))
    return out


def run_stage2(
    segment_id: str,
    per_subject: dict[str, list[ReducedDescription]],
    ctx: HouseContext,
    backend: Backend,
    settings: RunSettings,
    base_day: int = 0,
    transcript: Optional[Transcript] = None,
) -> StageRunResult:
    templates = settings.templates or default_templates()
    result = StageRunResult(segment_id, 2)
    for subject, descs in per_subject.items():
        records: list[ActivityRecord] = []
        last_activity = NO_LAST_ACTIVITY
        for idx, part in enumerate(chunk(descs, settings.m), start=1):
            bundle = build_stage2_prompt(
                ctx, part, last_activity, settings.stage2_examples, subject, templates, base_day,
                ChunkMeta(segment_id, 2, idx, len(part), subject),
            )
            try:
                rows = _ask(
                    backend, _request(bundle, settings),
                    lambda text: parse_stage2_response(text, ctx, base_day), transcript, result,
                )
            except (ResponseError, BadTimestamp, ContextTooLong) as err:
                logger.warning("%s: stage 2 %s chunk %d failed: %s", segment_id, subject, idx, err)
                result.failed_chunks.append((subject, idx, str(err)))
                continue
            except RateLimited as err:
                raise BackendUnavailable(f"rate limited: {err}") from err
            rows.sort(key=lambda r: (r.start, r.end))
            records.extend(rows)
            if rows:
                last = rows[-1].activity
                last_activity = f"{last}: {ctx.activity_label(last)}"
        result.records[subject] = records
    return result


def assemble_timeline(records: Sequence[ActivityRecord], span: tuple[int, int], subject: str = "") -> Timeline:
    """Clip to ``span``, drop empty and duplicate intervals, sort by start."""
    lo, hi = span
    entries = set()
    for r in records:
        start, end = max(r.start, lo), min(r.end, hi)
        if start < end:
            entries.add(TimelineEntry(start, end, r.activity))
    return Timeline(subject, tuple(sorted(entries, key=lambda e: (e.start, e.end, e.activity))))


@dataclass
class SegmentResult:
    segment: Segment
    stage1: StageRunResult
    stage2: StageRunResult
    timelines: dict[str, Timeline]
    transcript_path: str = ""

    @property
    def calls(self) -> int:
        return self.stage1.calls + self.stage2.calls

    def to_dict(self) -> dict:
        fmt = format_ts
        return {
            "segment": self.segment.id,
            "house": self.segment.house_id,
            "scenario": self.segment.scenario.value,
            "span": [fmt(self.segment.span[0]), fmt(self.segment.span[1])],
            "residents": list(self.segment.present_residents),
            "pairs": len(self.segment.pairs),
            "calls": self.calls,
            "descriptions": [
                {
                    "start": fmt(d.start),
                    "end": fmt(d.end),
                    "last_states": dict(d.last_states),
                    "location": d.location,
                    "subject": d.subject,
                    "description": d.description,
                }
                for d in self.stage1.descriptions
            ],
            "records": {
                subject: [
                    {
                        "start": fmt(r.start),
                        "end": fmt(r.end),
                        "duration": r.duration,
                        "last_activity": r.last_activity,
                        "reasoning": r.reasoning,
                        "activity": r.activity,
                    }
                    for r in recs
                ]
                for subject, recs in self.stage2.records.items()
            },
            "timelines": {
                subject: [[fmt(e.start), fmt(e.end), e.activity] for e in tl.entries]
                for subject, tl in self.timelines.items()
            },
            "failed_chunks": {
                "stage1": [list(f) for f in self.stage1.failed_chunks],
                "stage2": [list(f) for f in self.stage2.failed_chunks],
            },
            "transcript": self.transcript_path,
        }


def run_segment(
    segment: Segment,
    ctx: HouseContext,
    backend: Backend,
    settings: RunSettings,
    transcript: Optional[Transcript] = None,
    transcript_path: str = "",
) -> SegmentResult:
    """Both stages for one segment, with the context narrowed to the residents at home."""
    local = ctx.with_residents(segment.present_residents)
    base_day = segment.base_day
    s1 = run_stage1(segment.id, segment.pairs, local, backend, settings, base_day, transcript)
    per_subject = split_by_subject(s1.descriptions, local.residents, settings.unassigned)
    s2 = run_stage2(segment.id, per_subject, local, backend, settings, base_day, transcript)
    timelines = {
        r: assemble_timeline(s2.records.get(r, []), segment.span, r) for r in local.residents
    }
    return SegmentResult(segment, s1, s2, timelines, transcript_path)
