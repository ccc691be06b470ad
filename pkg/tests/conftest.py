"""Shared fixtures: one full checklist run feeds every acceptance test."""

import sys

import pytest

_ACCEPTANCE = {"summary": None}


@pytest.fixture(scope="session")
def acceptance_summary():
    """Full checklist, run once per session (roughly 15 to 20 minutes).

    Progress goes to the unbuffered terminal stream so a long run is
    visibly alive even under output capture.
    """
    from fibergate.verify import run_all

    def progress(msg):
        print(msg, file=sys.__stderr__, flush=True)

    summary = run_all(progress=progress)
    _ACCEPTANCE["summary"] = summary
    return summary


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    summary = _ACCEPTANCE["summary"]
    if summary is None:
        return
    terminalreporter.section("acceptance checklist")
    for result in summary.results:
        terminalreporter.write_line(result.headline(timing=True))
    terminalreporter.write_line(
        f"{sum(r.passed for r in summary.results)}/{len(summary.results)} checks passed"
    )
