import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import build_universe  # noqa: E402

ACCEPTANCE_RESULTS = []


@pytest.fixture
def universe():
    return build_universe()


@pytest.fixture
def option1_universe():
    from compliance_pki.certificates import TrustMode

    return build_universe(TrustMode.MANUFACTURER_LEVEL, tag="o1")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
