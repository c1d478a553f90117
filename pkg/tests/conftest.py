import numpy as np
import pytest

from vaoi_noma.experiments import fig1_instance, two_user


@pytest.fixture
def fig1():
    return fig1_instance()


@pytest.fixture
def table_noma():
    # Table I, second row
    return two_user(0.9, 2.0, (0.1, 1.0), 0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
