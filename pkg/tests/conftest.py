import time

import pytest

from helpers import table3_fixture

SUITE_BUDGET_S = 60.0
_start = time.perf_counter()


@pytest.fixture(scope="session")
def table3(tmp_path_factory):
    return table3_fixture(tmp_path_factory.mktemp("table3"))


def pytest_sessionfinish(session, exitstatus):
    # the whole offline suite has a time budget; exceeding it fails the run
    elapsed = time.perf_counter() - _start
    if session.testscollected > 100 and elapsed > SUITE_BUDGET_S and exitstatus == 0:
        session.exitstatus = 1
        print(f"\nsuite took {elapsed:.1f}s, over the {SUITE_BUDGET_S:.0f}s budget")
