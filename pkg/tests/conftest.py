import sys

import numpy as np
import pytest

from vshp import assemble, default_params, trim
from vshp.sim import Scenario, run
from vshp.smallsignal import linearize_trim


@pytest.fixture(scope="session")
def params():
    return default_params()


@pytest.fixture(scope="session", autouse=True)
def warm_kernels(params):
    """Compile the numba kernels once so timed tests measure the work itself."""
    for kind in ("euler", "ieee", "hygov", "linearised"):
        tr = trim(assemble(kind, params), 0.6, 1.0)
        linearize_trim(tr)
        run(Scenario(model=kind, t_end=0.01, P_star=0.6), params)


@pytest.fixture(scope="session")
def euler_trim(params):
    return trim(assemble("euler", params), 0.6, 1.0)


def rms(a):
    return float(np.sqrt(np.mean(np.square(a))))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
