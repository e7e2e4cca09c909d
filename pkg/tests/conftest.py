"""Shared pytest plumbing: the acceptance-criteria summary block.

Acceptance tests call :func:`record_criterion`; the collected verdicts are
printed after the run in a single PASS/FAIL line per criterion, outside
pytest's output capture.
"""

from typing import Dict, Tuple

_CRITERIA: Dict[int, Tuple[bool, str]] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    _CRITERIA[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        passed, detail = _CRITERIA[number]
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"CRITERION {number:2d}: {verdict} — {detail}")
