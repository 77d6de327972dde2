import re

import pytest
from hypothesis import HealthCheck, settings

from gig1.matan import SolveOptions, solve
from gig1.models import period_two_kernel, scalar_walk_kernel, two_phase_kernel
from gig1.stationary import stationary
from gig1.tails import disaster_kernel, mg1_pareto_kernel

settings.register_profile("ci", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")


class Solved:
    def __init__(self, kernel, kmax):
        self.kernel = kernel
        self.art = solve(kernel, SolveOptions(kmax=kmax))
        self.sr = stationary(kernel, self.art)


@pytest.fixture(scope="session")
def scalar():
    return Solved(scalar_walk_kernel(), 200)


@pytest.fixture(scope="session")
def period2():
    return Solved(period_two_kernel(), 512)


@pytest.fixture(scope="session")
def period2_eps():
    return Solved(period_two_kernel(eps=0.1, gamma=2.5, kmax=512), 512)


@pytest.fixture(scope="session")
def disaster():
    return Solved(disaster_kernel(0.2, 0.5, 2.0, 4096), 4096)


@pytest.fixture(scope="session")
def disaster_long():
    return Solved(disaster_kernel(0.2, 0.5, 2.0, 10000), 10000)


@pytest.fixture(scope="session")
def mg1():
    return Solved(mg1_pareto_kernel(0.5, 2.0, 4096), 4096)


@pytest.fixture(scope="session")
def two_phase():
    return Solved(two_phase_kernel(), 2048)


_CRIT = re.compile(r"test_acceptance\.py::test_criterion_(\d+)")


def pytest_terminal_summary(terminalreporter):
    outcome = {}
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            m = _CRIT.search(rep.nodeid)
            if m and rep.when in ("call", "setup"):
                n = int(m.group(1))
                ok = key == "passed"
                outcome[n] = outcome.get(n, True) and ok
    if not outcome:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(outcome):
        terminalreporter.write_line(f"criterion {n}: {'PASS' if outcome[n] else 'FAIL'}")
