"""House configuration files (TOML).

Sections: ``[dataset]``, ``[context]``, ``[regroup]``, ``[[filters]]``,
``[run]`` and ``[eval]``. Relative paths are resolved against the file.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Union

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from . import aras
from .ingest import DEFAULT_DAY_PATTERN
from .model import Activity, HouseContext, LabelMap, Room, SensorMeta, validate_house_context
from .preprocess import FilterRule
from .promptgen import Templates, load_examples

BUILTIN = {"A": "house_a.toml", "B": "house_b.toml"}


class ConfigError(Exception):
    pass


@dataclass
class DatasetConfig:
    path: Optional[Path] = None
    day_pattern: str = DEFAULT_DAY_PATTERN
    concat_days: bool = False


@dataclass
class RunConfig:
    n: int = 20
    m: int = 15
    backend: str = "mock"
    model: str = "gpt-4-32k-0613"
    temperature: float = 0.0
    max_output_tokens: int = 4096
    endpoint: str = ""
    parallel: int = 1
    unassigned: str = "all"
    use_system: bool = True
    stage1_examples: list[str] = field(default_factory=list)
    stage2_examples: list[str] = field(default_factory=list)
    templates_dir: Optional[Path] = None

    def templates(self) -> Templates:
        return Templates.load(self.templates_dir, self.use_system)


@dataclass
class EvalConfig:
    away_ids: tuple[int, ...] = (aras.GOING_OUT,)
    min_len: int = 120
    subject_matching: str = "identity"
    exclude: tuple[int, ...] = (0,)


@dataclass
class HouseConfig:
    source: Path
    ctx: HouseContext
    labels: LabelMap
    filters: list[FilterRule]
    dataset: DatasetConfig
    run: RunConfig
    eval: EvalConfig


def _path(base: Path, value: Optional[str]) -> Optional[Path]:
    if not value:
        return None
    p = Path(value)
    return p if p.is_absolute() else (base / p).resolve()


def _context(d: dict) -> HouseContext:
    try:
        sensors = tuple(
            SensorMeta(
                id=s["id"], kind=s.get("kind", ""), room=s["room"],
                furniture=s.get("furniture", ""), description=s.get("description", ""),
            )
            for s in d["sensors"]
        )
        rooms = tuple(
            Room(r["name"], tuple(r.get("furniture", ())), tuple(r.get("sensors", ())))
            for r in d.get("rooms", ())
        )
        if d.get("catalog") == "aras":
            habits = {int(k): v for k, v in d.get("habits", {}).items()}
            activities = tuple(Activity(a.id, a.label, habits.get(a.id, "")) for a in aras.CATALOG)
        else:
            activities = tuple(Activity(int(a["id"]), a["label"], a.get("habit", "")) for a in d["activities"])
        residents = tuple(d.get("residents") or [f"User {i}" for i in range(1, int(d.get("n_residents", 2)) + 1)])
        return HouseContext(
            house_id=str(d["house_id"]),
            residents=residents,
            rooms=rooms,
            sensors=sensors,
            activities=activities,
            schedule=dict(d.get("schedule", {})),
            background=d.get("background", ""),
        )
    except KeyError as exc:
        raise ConfigError(f"[context] is missing {exc}") from None


def _labels(d: dict, house_id: str) -> LabelMap:
    preset = d.get("preset")
    if preset == "aras_house_a":
        return aras.house_a_labels()
    if preset == "aras_house_b":
        return aras.house_b_labels()
    if preset:
        raise ConfigError(f"unknown [regroup] preset {preset!r}")
    if "map" not in d:
        raise ConfigError("[regroup] needs either preset or map")
    mapping = {int(k): int(v) for k, v in d["map"].items()}
    dropped = frozenset(int(x) for x in d.get("dropped", ()))
    return LabelMap(mapping, dropped)


def load_config(path: Union[str, Path]) -> HouseConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    base = path.parent.resolve()
    if "context" not in raw:
        raise ConfigError(f"{path}: missing [context] section")
    ctx = _context(raw["context"])
    problems = validate_house_context(ctx)
    if problems:
        raise ConfigError(f"{path}: " + "; ".join(problems))

    ds = raw.get("dataset", {})
    dataset = DatasetConfig(
        path=_path(base, ds.get("path")),
        day_pattern=ds.get("day_pattern", DEFAULT_DAY_PATTERN),
        concat_days=bool(ds.get("concat_days", False)),
    )
    try:
        filters = [
            FilterRule(f["kind"], f["sensor"], frozenset(f.get("coactive_set", ())), int(f.get("window", 300)))
            for f in raw.get("filters", [])
        ]
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: bad [[filters]] entry: {exc}") from None
    known = set(ctx.sensor_ids)
    for rule in filters:
        for sid in {rule.sensor, *rule.coactive_set}:
            if sid not in known:
                raise ConfigError(f"{path}: filter rule references unknown sensor {sid}")

    rn = raw.get("run", {})
    run = RunConfig(
        n=int(rn.get("n", 20)),
        m=int(rn.get("m", 15)),
        backend=rn.get("backend", "mock"),
        model=rn.get("model", "gpt-4-32k-0613"),
        temperature=float(rn.get("temperature", 0.0)),
        max_output_tokens=int(rn.get("max_output_tokens", 4096)),
        endpoint=rn.get("endpoint", ""),
        parallel=int(rn.get("parallel", 1)),
        unassigned=rn.get("unassigned", "all"),
        use_system=bool(rn.get("use_system", True)),
        stage1_examples=load_examples(_path(base, rn.get("stage1_examples"))),
        stage2_examples=load_examples(_path(base, rn.get("stage2_examples"))),
        templates_dir=_path(base, rn.get("templates")),
    )
    if run.unassigned not in ("all", "drop"):
        raise ConfigError(f"{path}: [run] unassigned must be 'all' or 'drop'")
    ev = raw.get("eval", {})
    evaluation = EvalConfig(
        away_ids=tuple(int(x) for x in ev.get("away_ids", (aras.GOING_OUT,))),
        min_len=int(ev.get("min_len", 120)),
        subject_matching=ev.get("subject_matching", "identity"),
        exclude=tuple(int(x) for x in ev.get("exclude", (0,))),
    )
    if evaluation.subject_matching not in ("identity", "best"):
        raise ConfigError(f"{path}: [eval] subject_matching must be 'identity' or 'best'")
    return HouseConfig(path, ctx, _labels(raw.get("regroup", {}), ctx.house_id), filters, dataset, run, evaluation)


def builtin_config_path(house: str) -> Path:
    name = BUILTIN.get(house.upper())
    if name is None:
        raise ConfigError(f"no built-in configuration for house {house!r}")
    return Path(str(resources.files("lahar") / "data" / name))
