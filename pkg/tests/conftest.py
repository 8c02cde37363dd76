import sys
from pathlib import Path

import pytest

from d2dmarl.radio import CellConfig

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def small_cell():
    return CellConfig(num_cues=4, num_rbs=4, num_d2d=4)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
