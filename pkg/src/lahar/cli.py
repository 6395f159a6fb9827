"""Command-line entry point: ``lahar ingest | run | eval``.

Everything lands under ``--out``::

    manifest.json
    segments/<id>.json      event pairs and run-length ground truth
    transcripts/<id>.jsonl  every model request and reply
    results/<id>.json       descriptions, activity records, timelines
    reports/                tables, confusion matrices, figures/
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor, as_completed
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import ConfigError, HouseConfig, builtin_config_path, load_config
from .evaluator import (
    SCENARIO_ORDER,
    ScenarioTally,
    aggregate_json,
    confusion_csv,
    per_class_csv,
    report_from_tally,
    score_segment,
    class_table_csv,
    class_table_json,
    class_table_text,
)
from .ingest import IngestError, load_house
from .llm import Backend, BackendUnavailable, LiveBackend, ReplayBackend, Transcript, read_transcripts
from .model import EventPair, Scenario, Segment, Timeline, TimelineEntry, day_of, parse_ts
from .pipeline import RunSettings, run_segment
from .segmenter import UnmappedLabel, segment_house

logger = logging.getLogger("lahar")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARSE = 3
EXIT_BACKEND = 4
EXIT_INCOMPLETE = 5


class CliError(Exception):
    def __init__(self, message: str, code: int) -> None:
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------- files


def write_atomic(path: Path, data) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data.encode("utf-8") if isinstance(data, str) else data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False) + "\n"


def read_json(path: Path, what: str):
    if not path.is_file():
        raise CliError(f"{what} not found: {path}", EXIT_CONFIG)
    return json.loads(path.read_text(encoding="utf-8"))


def scenario_name(segment_scenario: str, house: str) -> str:
    return f"{'Single' if segment_scenario == Scenario.SINGLE.value else 'Multi'}_{house}"


# ---------------------------------------------------------------- config


def resolve_config(ref: str) -> HouseConfig:
    """``builtin:A`` or a path to a TOML file."""
    if ref.startswith("builtin:"):
        return load_config(builtin_config_path(ref.split(":", 1)[1]))
    return load_config(ref)


def _config_ref(args) -> str:
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        return str(path.resolve())
    if not args.house:
        raise ConfigError("either --config or --house is required")
    builtin_config_path(args.house)
    return f"builtin:{args.house.upper()}"


# ---------------------------------------------------------------- segment files


def _rle(values) -> list[list[int]]:
    arr = np.asarray(values)
    if len(arr) == 0:
        return []
    cuts = np.flatnonzero(np.diff(arr)) + 1
    starts = [0, *cuts.tolist()]
    ends = [*cuts.tolist(), len(arr)]
    return [[int(arr[s]), e - s] for s, e in zip(starts, ends)]


def _unrle(runs) -> np.ndarray:
    if not runs:
        return np.zeros(0, dtype=np.int64)
    return np.repeat([r[0] for r in runs], [r[1] for r in runs]).astype(np.int64)


def segment_to_dict(seg: Segment) -> dict:
    return {
        "id": seg.id,
        "house": seg.house_id,
        "scenario": seg.scenario.value,
        "span": list(seg.span),
        "residents": list(seg.present_residents),
        "events": len(seg.events),
        "pairs": [
            {"start": p.start, "end": p.end, "sensor": p.sensor, "location": p.location, "synthetic": p.synthetic}
            for p in seg.pairs
        ],
        "ground_truth": {r: _rle(v) for r, v in (seg.ground_truth or {}).items()},
    }


def segment_from_dict(d: dict) -> Segment:
    return Segment(
        id=d["id"],
        house_id=d["house"],
        span=(int(d["span"][0]), int(d["span"][1])),
        scenario=Scenario(d["scenario"]),
        present_residents=tuple(d["residents"]),
        pairs=tuple(
            EventPair(p["start"], p["end"], p["sensor"], p["location"], p.get("synthetic")) for p in d["pairs"]
        ),
        ground_truth={r: _unrle(v) for r, v in d.get("ground_truth", {}).items()},
    )


def restrict(seg: Segment, window: tuple[int, int]) -> Segment:
    """Cut a segment down to ``window`` (seconds); pairs overlapping the window are clipped."""
    lo, hi = max(seg.span[0], window[0]), min(seg.span[1], window[1])
    if lo >= hi:
        raise CliError(f"window does not overlap segment {seg.id}", EXIT_CONFIG)
    pairs = tuple(
        EventPair(max(p.start, lo), min(p.end, hi - 1), p.sensor, p.location, p.synthetic)
        for p in seg.pairs
        if p.start < hi and p.end >= lo
    )
    truth = {r: np.asarray(v)[lo - seg.span[0] : hi - seg.span[0]] for r, v in (seg.ground_truth or {}).items()}
    return Segment(seg.id, seg.house_id, (lo, hi), seg.scenario, seg.present_residents, (), pairs, truth)


def parse_window(text: str, day: int) -> tuple[int, int]:
    try:
        a, b = text.split("-")
        return parse_ts(a, day), parse_ts(b, day) + 1
    except ValueError:
        raise CliError(f"bad --window {text!r}, expected HH:MM:SS-HH:MM:SS", EXIT_CONFIG) from None


# ---------------------------------------------------------------- ingest


def cmd_ingest(args) -> int:
    out = Path(args.out)
    ref = _config_ref(args)
    cfg = resolve_config(ref)
    if args.house and args.house.upper() != cfg.ctx.house_id.upper():
        raise ConfigError(f"--house {args.house} does not match house_id {cfg.ctx.house_id!r} in the config")
    data = Path(args.data) if args.data else cfg.dataset.path
    if data is None or not data.is_dir():
        raise ConfigError(f"dataset directory not found: {data}")

    valid = set(cfg.labels.raw_to_grouped)
    days = load_house(data, cfg.ctx, cfg.dataset.concat_days, cfg.dataset.day_pattern, valid_labels=valid)
    segments = segment_house(days, cfg.eval.away_ids, cfg.eval.min_len, cfg.ctx, cfg.labels, cfg.filters)

    manifest_path = out / "manifest.json"
    manifest = json.loads(manifest_path.read_text(encoding="utf-8")) if manifest_path.is_file() else {}
    houses = manifest.setdefault("houses", {})
    entries = []
    for seg in segments:
        rel = f"segments/{seg.id}.json"
        write_atomic(out / rel, dump_json(segment_to_dict(seg)))
        entries.append({
            "id": seg.id,
            "scenario": seg.scenario.value,
            "day": day_of(seg.span[0]) + 1,
            "span": list(seg.span),
            "residents": list(seg.present_residents),
            "pairs": len(seg.pairs),
            "file": rel,
        })
    counts = {s.value: sum(e["scenario"] == s.value for e in entries) for s in Scenario}
    houses[cfg.ctx.house_id] = {"config": ref, "data": str(data.resolve()), "counts": counts, "segments": entries}
    manifest["houses"] = dict(sorted(houses.items()))
    manifest["version"] = __version__
    write_atomic(manifest_path, dump_json(manifest))
    print(f"house {cfg.ctx.house_id}: {counts['SINGLE']} SINGLE, {counts['MULTI']} MULTI segments")
    return EXIT_OK


# ---------------------------------------------------------------- run


def _select(manifest: dict, spec: str) -> list[tuple[str, dict]]:
    """``all``, or a comma list of segment ids, house ids (``A``) or ``<house>/day<n>``."""
    every = [(h, e) for h, info in manifest.get("houses", {}).items() for e in info["segments"]]
    if spec == "all":
        return every
    chosen = []
    for token in (t.strip() for t in spec.split(",") if t.strip()):
        if "/day" in token:
            house, day = token.split("/day", 1)
            hits = [(h, e) for h, e in every if h == house and str(e["day"]) == day.lstrip("0")]
        else:
            hits = [(h, e) for h, e in every if e["id"] == token or h == token]
        if not hits:
            raise CliError(f"no segment matches {token!r}", EXIT_CONFIG)
        chosen += [x for x in hits if x not in chosen]
    return chosen


def make_backend(kind: str, cfg: HouseConfig, args) -> Backend:
    if kind == "mock":
        from .mock import ScriptedBackend

        return ScriptedBackend(cfg.ctx, adversarial=args.adversarial)
    if kind == "replay":
        return ReplayBackend(args.replay_entries, strict=True)
    if kind == "live":
        return LiveBackend(endpoint=cfg.run.endpoint or None)
    raise CliError(f"unknown backend {kind!r}", EXIT_CONFIG)


def cmd_run(args) -> int:
    out = Path(args.out)
    manifest = read_json(out / "manifest.json", "manifest")
    selected = _select(manifest, args.segments)
    configs = {h: resolve_config(manifest["houses"][h]["config"]) for h in {h for h, _ in selected}}
    if args.backend == "replay":
        src = Path(args.transcript_dir) if args.transcript_dir else out / "transcripts"
        if not src.exists():
            raise CliError(f"transcript directory not found: {src}", EXIT_CONFIG)
        # read everything before the run starts rewriting transcripts/
        args.replay_entries = read_transcripts([src])
    backends = {h: make_backend(args.backend or cfg.run.backend, cfg, args) for h, cfg in configs.items()}

    jobs = []
    for house, entry in selected:
        cfg = configs[house]
        seg = segment_from_dict(read_json(out / entry["file"], "segment file"))
        if args.window:
            seg = restrict(seg, parse_window(args.window, seg.base_day))
        settings = RunSettings(
            n=args.n or cfg.run.n,
            m=args.m or cfg.run.m,
            model=cfg.run.model,
            temperature=cfg.run.temperature,
            max_output_tokens=cfg.run.max_output_tokens,
            stage1_examples=cfg.run.stage1_examples,
            stage2_examples=cfg.run.stage2_examples,
            templates=cfg.run.templates(),
            unassigned=cfg.run.unassigned,
        )
        jobs.append((seg, cfg, backends[house], settings))

    def work(seg, cfg, backend, settings):
        rel = f"transcripts/{seg.id}.jsonl"
        transcript = Transcript(out / rel)
        result = run_segment(seg, cfg.ctx, backend, settings, transcript, rel)
        write_atomic(out / "results" / f"{seg.id}.json", dump_json(result.to_dict()))
        return result

    parallel = max(1, args.parallel or 1)
    failed = 0
    with ThreadPoolExecutor(max_workers=parallel) as pool:
        futures = {pool.submit(work, *job): job[0].id for job in jobs}
        try:
            for fut in as_completed(futures):
                res = fut.result()
                n_failed = len(res.stage1.failed_chunks) + len(res.stage2.failed_chunks)
                failed += n_failed
                logger.info("%s: %d calls, %d failed chunks", res.segment.id, res.calls, n_failed)
        except BackendUnavailable:
            for f in futures:
                f.cancel()
            raise
    print(f"{len(jobs)} segments done, {failed} failed chunks")
    return EXIT_OK


# ---------------------------------------------------------------- eval


def _timelines_from_result(res: dict, base_day: int) -> dict[str, Timeline]:
    return {
        subject: Timeline(
            subject,
            tuple(TimelineEntry(parse_ts(a, base_day), parse_ts(b, base_day), int(act)) for a, b, act in entries),
        )
        for subject, entries in res["timelines"].items()
    }


def cmd_eval(args) -> int:
    out = Path(args.out)
    manifest = read_json(out / "manifest.json", "manifest")
    houses = manifest.get("houses", {})
    configs = {h: resolve_config(info["config"]) for h, info in houses.items()}
    present = {scenario_name(e["scenario"], h) for h, info in houses.items() for e in info["segments"]}
    if args.scenario:
        wanted = [s.strip() for s in args.scenario.split(",") if s.strip()]
    else:
        wanted = [s for s in SCENARIO_ORDER if s in present] + sorted(present - set(SCENARIO_ORDER))

    tallies: dict[str, ScenarioTally] = {}
    ctx_of: dict[str, HouseConfig] = {}
    missing: list[str] = []
    figure_jobs = []
    for house, info in houses.items():
        cfg = configs[house]
        ids = cfg.ctx.activity_ids()
        for entry in info["segments"]:
            sc = scenario_name(entry["scenario"], house)
            if sc not in wanted:
                continue
            res_path = out / "results" / f"{entry['id']}.json"
            if not res_path.is_file():
                missing.append(entry["id"])
                continue
            seg = segment_from_dict(read_json(out / entry["file"], "segment file"))
            res = json.loads(res_path.read_text(encoding="utf-8"))
            span = tuple(parse_ts(x, 0) for x in res["span"])
            if span != seg.span:
                seg = restrict(seg, span)
            timelines = _timelines_from_result(res, 0)
            tally = score_segment(timelines, seg.ground_truth, seg.span, ids, cfg.eval.subject_matching)
            tallies[sc] = tallies[sc] + tally if sc in tallies else tally
            ctx_of[sc] = cfg
            figure_jobs.append((seg, timelines, cfg))
    empty = [s for s in wanted if s not in tallies]
    if missing or empty:
        parts = []
        if missing:
            parts.append(f"no results for {len(missing)} segment(s): {', '.join(sorted(missing))}")
        if empty:
            parts.append(f"no evaluated segments for {', '.join(empty)}")
        raise CliError("; ".join(parts), EXIT_INCOMPLETE)

    reports = {}
    for sc in wanted:
        cfg = ctx_of[sc]
        acts = cfg.ctx.activities
        reports[sc] = report_from_tally(
            sc, tallies[sc], [a.id for a in acts], [a.label for a in acts], cfg.eval.exclude
        )
    rdir = out / "reports"
    ordered = [reports[s] for s in wanted]
    write_atomic(rdir / "per_class.csv", per_class_csv(ordered))
    write_atomic(rdir / "aggregate.json", aggregate_json(ordered))
    write_atomic(rdir / "class_table.csv", class_table_csv(reports, wanted))
    write_atomic(rdir / "class_table.json", class_table_json(reports, wanted))
    write_atomic(rdir / "class_table.txt", class_table_text(reports, wanted))
    for sc, rep in reports.items():
        write_atomic(rdir / f"confusion_{sc}.csv", confusion_csv(rep))

    if not args.no_figures:
        from .plots import confusion_figure, timeline_figure

        for sc, rep in reports.items():
            confusion_figure(rep, rdir / "figures" / f"confusion_{sc}.png")
        for seg, timelines, cfg in figure_jobs:
            labels = {a.id: a.label for a in cfg.ctx.activities}
            timeline_figure(seg.id, seg.span, timelines, seg.ground_truth, labels,
                            rdir / "figures" / f"timeline_{seg.id}.png")
    sys.stdout.write(class_table_text(reports, wanted))
    return EXIT_OK


# ---------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lahar", description="Recognise daily activities in ARAS smart-home recordings with a chat-completion model.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    ing = sub.add_parser("ingest", help="parse a house, preprocess and segment it")
    ing.add_argument("--house", help="house id; selects the built-in config when --config is absent")
    ing.add_argument("--config", help="house config file (TOML)")
    ing.add_argument("--data", help="directory with DAY_<n>.txt files (overrides [dataset].path)")
    ing.add_argument("--out", required=True)
    ing.set_defaults(func=cmd_ingest)

    run = sub.add_parser("run", help="run both prompt stages over segments")
    run.add_argument("--out", required=True)
    run.add_argument("--backend", choices=("live", "mock", "replay"), help="defaults to [run].backend")
    run.add_argument("--segments", default="all", help="all, or ids / house ids / <house>/day<n>, comma separated")
    run.add_argument("--n", type=int, help="event pairs per description request")
    run.add_argument("--m", type=int, help="descriptions per activity request")
    run.add_argument("--parallel", type=int, default=1, help="segments processed concurrently")
    run.add_argument("--transcript-dir", help="recorded transcripts for --backend replay")
    run.add_argument("--window", help="restrict each segment to HH:MM:SS-HH:MM:SS on its first day")
    run.add_argument("--adversarial", action="store_true", help="mock backend varies its reply format")
    run.set_defaults(func=cmd_run)

    ev = sub.add_parser("eval", help="score results and write reports")
    ev.add_argument("--out", required=True)
    ev.add_argument("--scenario", help="comma separated, e.g. Single_A,Multi_A (default: all present)")
    ev.add_argument("--no-figures", action="store_true", help="skip PNG figures")
    ev.set_defaults(func=cmd_eval)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IngestError, UnmappedLabel) as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except BackendUnavailable as exc:
        print(f"backend unavailable: {exc}", file=sys.stderr)
        return EXIT_BACKEND
