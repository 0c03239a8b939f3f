import logging
import sys

import pytest
from hypothesis import settings

from coagsed import Grid2D, Params

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

logging.getLogger("coagsed").setLevel(logging.ERROR)


@pytest.fixture
def params():
    return Params(epsilon=0.05, alpha=0.5, gamma=1.2, b=6.0, m=6.0, M1=1024.0, M2=65536.0)


@pytest.fixture
def small_grid():
    return Grid2D.from_box((-2.0, 6.0), (2.0**-4, 2.0**4), 33, 4)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for key in sorted(lines, key=lambda k: (int(k.rstrip("ab")), k)):
            terminalreporter.write_line(lines[key])
