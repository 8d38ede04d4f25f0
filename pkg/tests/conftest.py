import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from nngate.model import EmbeddingSet  # noqa: E402

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("fast", max_examples=10, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_criteria: dict[int, list] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (rep.when != "call" and not rep.failed):
        return
    number, title = marker.args
    entry = _criteria.setdefault(number, [title, True, 0])
    entry[1] = entry[1] and not rep.failed
    entry[2] += rep.when == "call"


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, ok, count = _criteria[number]
        terminalreporter.write_line(f"AC{number:<2} {'PASS' if ok else 'FAIL'}  {title}  ({count} checks)")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_sets(rng):
    base = EmbeddingSet("base", tuple(f"b{i}" for i in range(40)), rng.standard_normal((40, 6)))
    queries = EmbeddingSet("q", tuple(f"q{i}" for i in range(15)), rng.standard_normal((15, 6)))
    return base, queries
