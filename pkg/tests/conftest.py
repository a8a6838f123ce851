import json
from contextlib import contextmanager
from pathlib import Path

import pytest

ORACLES = json.loads((Path(__file__).parent / "oracles" / "oracle_values.json").read_text())

# criterion number -> list of part outcomes, filled by the acceptance suite
ACCEPTANCE: dict[int, list[bool]] = {}


@contextmanager
def criterion(n: int):
    """Record one part of an acceptance criterion; any exception marks it failed."""
    ok = False
    try:
        yield
        ok = True
    finally:
        ACCEPTANCE.setdefault(n, []).append(ok)


@pytest.fixture(scope="session")
def oracle():
    return ORACLES


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: runs for more than a few seconds")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[n]
        verdict = "PASS" if all(parts) else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d}: {verdict} ({sum(parts)}/{len(parts)} parts)")
