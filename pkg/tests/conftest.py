import contextlib

import pytest

from jamsim import presets

# criterion number -> (title, passed); filled in by tests/test_acceptance.py
ACCEPTANCE = {}
ACCEPTANCE_TITLES = {
    1: "admissible-power thresholds",
    2: "budget arithmetic of the burst schedules",
    3: "sleep-then-jam exceedance guarantee",
    4: "burst response: peak, ordering, decay",
    5: "Monte Carlo means under the analytic bounds",
    6: "affine-product bounds",
    7: "analytic properties",
    8: "countermeasure study",
    9: "byte-identical reproduction",
}


@contextlib.contextmanager
def _record(number):
    ACCEPTANCE[number] = False
    yield
    ACCEPTANCE[number] = True


@pytest.fixture
def criterion():
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title in ACCEPTANCE_TITLES.items():
        if number not in ACCEPTANCE:
            status = "NOT RUN"
        else:
            status = "PASS" if ACCEPTANCE[number] else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {status}  {title}")


@pytest.fixture(scope="session")
def bench_plant():
    return presets.plant()


@pytest.fixture(scope="session")
def bench_channel():
    return presets.channel()


@pytest.fixture(scope="session")
def bench_env():
    return presets.envelope()


@pytest.fixture(scope="session")
def bench_ctx():
    return presets.norm_context()
