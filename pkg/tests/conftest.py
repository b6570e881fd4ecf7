import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from polyloc.config import RunConfig
from polyloc.geometry import Rect
from polyloc.model import build_scenario
from polyloc.sim import run_trials

# PASS/FAIL lines from the acceptance module, repeated after the run
ACCEPTANCE_LINES = []

# Two agents, each ranging to two anchors and to each other.  Anchors alone
# leave each agent with a mirror ambiguity across its anchor pair.
RUNNING_ANCHORS = [(0.0, 0.0), (10.0, 0.0), (0.0, 14.0), (10.0, 14.0)]
RUNNING_AGENTS = [(5.0, 4.0), (5.0, 10.0)]
RUNNING_MIRRORS = [(5.0, -4.0), (5.0, 18.0)]


@pytest.fixture
def running_example():
    return build_scenario(
        Rect(-5.0, -8.0, 15.0, 22.0),
        RUNNING_ANCHORS,
        RUNNING_AGENTS,
        7.0,
        0.38,
        np.random.default_rng(11),
        seed=11,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def comparative_runs():
    """50 desk-scale trials per proposal on identical seeds, run once per session."""
    out = {}
    start = time.perf_counter()
    for kind in ("polygon", "baseline"):
        cfg = RunConfig(n_trials=50, n_samples=250, nbp_iterations=5, proposal=kind, seed=2024)
        out[kind] = run_trials(cfg)
    out["elapsed_s"] = time.perf_counter() - start
    return out


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
