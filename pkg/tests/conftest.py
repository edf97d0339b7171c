import numpy as np
import pytest

from srvfnet.data import BumpSpec, generate_bumps


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def bumps100():
    return generate_bumps(BumpSpec(num_peaks=2, T=100, seed=7), 40)


def smooth_warp(rng, T, knots=6):
    """Random strictly increasing piecewise-linear warp with a few knots."""
    inc = rng.uniform(0.3, 1.0, size=knots)
    y = np.concatenate([[0.0], np.cumsum(inc) / inc.sum()])
    return np.interp(np.linspace(0, 1, T), np.linspace(0, 1, knots + 1), y)


# one summary line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    lines = dict(ACCEPTANCE)
    # a criterion test that errored before recording still gets a line
    for reports in terminalreporter.stats.values():
        for rep in reports:
            name = getattr(rep, "nodeid", "")
            if "test_criterion_" in name and getattr(rep, "failed", False):
                n = int(name.split("test_criterion_")[1][:2])
                lines.setdefault(n, f"criterion {n:>2}: FAIL  errored before a result was recorded")
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        terminalreporter.write_line(lines[n])
