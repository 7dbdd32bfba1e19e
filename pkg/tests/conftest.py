import os

import numpy as np
import pytest


def pytest_collection_modifyitems(config, items):
    if os.environ.get("STARRADAR_LONGRUN") == "1":
        return
    skip = pytest.mark.skip(reason="set STARRADAR_LONGRUN=1 to run")
    for item in items:
        if "longrun" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for key in sorted(lines, key=str):
            terminalreporter.write_line(lines[key])
