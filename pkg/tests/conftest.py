import numpy as np
import pytest
from hypothesis import settings

from rough_euler import spectral as sp

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def grid64():
    return sp.spectral_grid(64)


@pytest.fixture(scope="session")
def grid16():
    return sp.spectral_grid(16)


@pytest.fixture
def pts():
    from frozen import PTS

    return np.array(PTS)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.LINES:
        terminalreporter.section("acceptance criteria")
        for line in mod.LINES:
            terminalreporter.write_line(line)
