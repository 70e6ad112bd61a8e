from __future__ import annotations

import pytest

from phaselock.integrate import OdeSettings

TIGHT = OdeSettings(rel_tol=1e-12, abs_tol=1e-14)

_acceptance: dict[str, tuple[str, str, list]] = {}


@pytest.fixture(scope="session")
def tight() -> OdeSettings:
    return TIGHT


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        name = report.nodeid.split("::")[-1]
        outcome = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        details = [f"{k}={v}" for k, v in report.user_properties]
        _acceptance[name] = (outcome, f"{report.duration:.1f}s", details)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name in sorted(_acceptance):
        outcome, duration, details = _acceptance[name]
        line = f"{outcome}  {name}  ({duration})"
        if details:
            line += "  " + "; ".join(details)
        terminalreporter.write_line(line)
