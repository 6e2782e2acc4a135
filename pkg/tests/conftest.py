import numpy as np
import pytest
from hypothesis import settings

from lapkin.tool import ToolGeometry

settings.register_profile("lapkin", deadline=None, max_examples=100, derandomize=True)
settings.load_profile("lapkin")

CONVENTIONS = [(s, a) for s in ("world_z", "handle_z") for a in ("yz", "xz")]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def geom():
    return ToolGeometry()


@pytest.fixture(params=CONVENTIONS, ids=lambda c: f"{c[0]}-{c[1]}")
def any_geom(request):
    s, a = request.param
    return ToolGeometry(sign_convention=s, axis_convention=a)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
