from __future__ import annotations

import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def verify_context():
    """Shared acceptance context; THRESHOLDCOAG_QUICK=1 selects the reduced scale."""
    from thresholdcoag.verify import VerifyContext

    quick = os.environ.get("THRESHOLDCOAG_QUICK", "") not in ("", "0")
    return VerifyContext(seed=int(os.environ.get("THRESHOLDCOAG_SEED", "0")), quick=quick)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def record_criterion():
    def record(line: str) -> None:
        ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
