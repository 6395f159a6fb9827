"""Reading ARAS-style daily matrix files.

Each line holds one second: ``n_sensors`` binary columns followed by the raw
activity ids of the two residents, whitespace separated.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .model import SECONDS_PER_DAY, HouseContext

logger = logging.getLogger(__name__)

DEFAULT_DAY_PATTERN = r"DAY_(\d+)\.txt"


class IngestError(Exception):
    pass


class MalformedLine(IngestError):
    def __init__(self, line_no: int, reason: str, path: str = "") -> None:
        self.line_no = line_no
        self.reason = reason
        where = f"{path}:" if path else "line "
        super().__init__(f"{where}{line_no}: {reason}")


class MissingDay(IngestError):
    pass


@dataclass(frozen=True)
class ReadingRow:
    t: int
    values: tuple[int, ...]
    labels: tuple[int, ...]


@dataclass
class DayRows:
    """Columnar block of reading rows.

    ``values[i, j]`` is sensor ``j`` at second ``t[i]``; ``labels[i, r]`` is the raw
    activity id of resident ``r``.
    """

    t: np.ndarray
    values: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self):
        for i in range(len(self.t)):
            yield self.row(i)

    def row(self, i: int) -> ReadingRow:
        return ReadingRow(int(self.t[i]), tuple(self.values[i].tolist()), tuple(self.labels[i].tolist()))

    def slice(self, lo: int, hi: int) -> "DayRows":
        return DayRows(self.t[lo:hi], self.values[lo:hi], self.labels[lo:hi])

    @staticmethod
    def concat(parts: list["DayRows"]) -> "DayRows":
        if not parts:
            return DayRows(np.zeros(0, np.int64), np.zeros((0, 0), np.int8), np.zeros((0, 2), np.int16))
        return DayRows(
            np.concatenate([p.t for p in parts]),
            np.concatenate([p.values for p in parts]),
            np.concatenate([p.labels for p in parts]),
        )


def parse_day_file(
    content: str,
    day_index: int,
    ctx: HouseContext,
    n_labels: int = 2,
    valid_labels=None,
    source: str = "",
) -> DayRows:
    """Parse one day's text; row ``i`` gets ``t = day_index * 86400 + i``."""
    if day_index < 0:
        raise ValueError("day_index must be >= 0")
    n_sensors = len(ctx.sensors)
    width = n_sensors + n_labels
    lines = content.splitlines()
    # Tolerate a trailing blank line, nothing else.
    while lines and not lines[-1].strip():
        lines.pop()
    try:
        grid = np.array([ln.split() for ln in lines], dtype=np.int64)
    except ValueError:
        grid = None
    if grid is None or (len(lines) and grid.ndim != 2) or (grid.size and grid.shape[1] != width):
        _locate_bad_line(lines, width, source)
        raise AssertionError("unreachable")  # pragma: no cover
    if len(lines) == 0:
        grid = np.zeros((0, width), dtype=np.int64)
    values = grid[:, :n_sensors]
    labels = grid[:, n_sensors:]
    bad = np.flatnonzero(((values != 0) & (values != 1)).any(axis=1))
    if bad.size:
        raise MalformedLine(int(bad[0]) + 1, "sensor value outside {0,1}", source)
    if valid_labels is not None:
        ok = np.isin(labels, np.fromiter(valid_labels, dtype=np.int64))
        bad = np.flatnonzero(~ok.all(axis=1))
        if bad.size:
            raise MalformedLine(int(bad[0]) + 1, f"unknown activity id in {labels[bad[0]].tolist()}", source)
    if len(lines) != SECONDS_PER_DAY:
        logger.warning("WrongRowCount: %s has %d rows, expected %d", source or f"day {day_index}", len(lines), SECONDS_PER_DAY)
    t = day_index * SECONDS_PER_DAY + np.arange(len(lines), dtype=np.int64)
    return DayRows(t, values.astype(np.int8), labels.astype(np.int16))


def _locate_bad_line(lines: list[str], width: int, source: str) -> None:
    for i, ln in enumerate(lines, start=1):
        tokens = ln.split()
        if len(tokens) != width:
            raise MalformedLine(i, f"expected {width} columns, got {len(tokens)}", source)
        for tok in tokens:
            try:
                int(tok)
            except ValueError:
                raise MalformedLine(i, f"non-integer token {tok!r}", source) from None


def day_files(directory: Union[str, Path], pattern: str = DEFAULT_DAY_PATTERN) -> list[tuple[int, Path]]:
    """Day files in ``directory`` as ``(day_number, path)``, ascending, gap-free from 1."""
    directory = Path(directory)
    if not directory.is_dir():
        raise MissingDay(f"{directory} is not a directory")
    rx = re.compile(pattern)
    found: dict[int, Path] = {}
    for p in directory.iterdir():
        m = rx.fullmatch(p.name)
        if m:
            found[int(m.group(1))] = p
    if not found:
        raise MissingDay(f"no day files matching {pattern!r} in {directory}")
    numbers = sorted(found)
    expected = list(range(numbers[0], numbers[0] + len(numbers)))
    if numbers != expected or numbers[0] not in (0, 1):
        missing = sorted(set(range(1 if numbers[0] else 0, numbers[-1] + 1)) - set(numbers))
        raise MissingDay(f"missing day files {missing} in {directory}")
    return [(n, found[n]) for n in numbers]


def load_house(
    directory: Union[str, Path],
    ctx: HouseContext,
    concat_days: bool,
    pattern: str = DEFAULT_DAY_PATTERN,
    valid_labels=None,
):
    """Load every day file; a list of per-day blocks, or one block when ``concat_days``.

    Day ``DAY_<n>`` gets day index ``n - 1`` (``n`` when numbering starts at 0).
    """
    files = day_files(directory, pattern)
    offset = files[0][0]
    days = [
        parse_day_file(p.read_text(), n - offset, ctx, valid_labels=valid_labels, source=str(p))
        for n, p in files
    ]
    return DayRows.concat(days) if concat_days else days
