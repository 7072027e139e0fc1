import math

import numpy as np
import pytest
from hypothesis import settings

from trajscore.dataset_io import Recording, RoadUserClass
from trajscore.semantic_map import Region, RegionType, SemanticMap
from trajscore.synthetic import straight_track

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def square(x0, y0, x1, y1):
    return [[x0, y0], [x1, y0], [x1, y1], [x0, y1]]


@pytest.fixture
def street_map():
    """One long eastbound street with a walkway beside it."""
    return SemanticMap("test", [
        Region("street", RegionType.STREET, square(-200, -4, 200, 4), speed_limit=50 / 3.6,
               direction_ref=[[-200, 0], [200, 0]]),
        Region("walk", RegionType.WALKWAY, square(-200, 4, 200, 8)),
    ])


def car_line(specs, frame_rate=25.0, n=150):
    """Cars on the x axis heading east: specs = [(x0, speed), ...]."""
    tracks = [straight_track(i, (x0, 0.0), 0.0, v, n, frame_rate) for i, (x0, v) in enumerate(specs)]
    return Recording("line", frame_rate, tracks)
