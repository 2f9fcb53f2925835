"""Shared fixtures and the acceptance-suite terminal summary."""

import numpy as np
import pytest

from tinyabsa import autodiff as ad


@pytest.fixture(autouse=True)
def _reset_numeric_state():
    # Tests that flip the default dtype or finite checks must not leak.
    yield
    ad.set_default_dtype(np.float32)
    ad.set_finite_checks(True)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = []
    for status in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(status, []):
            if "test_acceptance" not in getattr(report, "nodeid", ""):
                continue
            name = report.nodeid.split("::")[-1]
            verdict = "PASS" if status == "passed" else "FAIL"
            lines.append(f"{verdict}  {name}")
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
