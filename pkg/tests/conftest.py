from __future__ import annotations

import sys
from pathlib import Path

import pytest

from lahar.config import builtin_config_path, load_config
from lahar.model import Activity, HouseContext, Room, SensorMeta

TESTS = Path(__file__).resolve().parent
FIXTURES = TESTS / "fixtures"
MINI = FIXTURES / "mini" / "houseA"
GOLDEN = FIXTURES / "golden"
EXCERPT = FIXTURES / "excerpt_b"

sys.path.insert(0, str(TESTS))
sys.path.insert(0, str(FIXTURES))


@pytest.fixture(scope="session")
def cfg_a():
    return load_config(builtin_config_path("A"))


@pytest.fixture(scope="session")
def cfg_b():
    return load_config(builtin_config_path("B"))


def tiny_ctx(n_sensors: int = 5, residents=("User 1", "User 2")) -> HouseContext:
    """Small synthetic house: sensors S0..Sn spread over two rooms."""
    sensors = tuple(
        SensorMeta(f"S{i}", "contact", "Kitchen" if i % 2 else "Bedroom", f"thing {i}", "")
        for i in range(n_sensors)
    )
    rooms = (
        Room("Bedroom", (), tuple(s.id for s in sensors if s.room == "Bedroom")),
        Room("Kitchen", (), tuple(s.id for s in sensors if s.room == "Kitchen")),
    )
    acts = (Activity(0, "Other"), Activity(1, "Cooking"), Activity(2, "Sleeping"))
    return HouseContext("T", tuple(residents), rooms, sensors, acts)


@pytest.fixture
def ctx5():
    return tiny_ctx()


# ---------------------------------------------------------------- acceptance reporting

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("[", 1)[1].split("]", 1)[0])):
            terminalreporter.write_line(line)
