import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from wncs.config import load_builtin

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def reactor():
    return load_builtin("rate_two_nodes")


@pytest.fixture(scope="session")
def two_links():
    return load_builtin("power_two_links")


@pytest.fixture(scope="session")
def four_links():
    return load_builtin("power_four_links")


def random_stable(rng, n, scale=1.0):
    A = rng.normal(size=(n, n)) * scale
    return A - (np.linalg.eigvals(A).real.max() + rng.uniform(0.2, 2.0)) * np.eye(n)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n].line())
