import random

import pytest
from hypothesis import HealthCheck, settings

from nvsim.trace import AccessRecord, Op, Trace

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def make_trace(*records):
    """``make_trace(("R", 0x1000, 0), ...)``"""
    return Trace.from_records(AccessRecord(Op.WRITE if o == "W" else Op.READ, a, g) for o, a, g in records)


def random_trace(rng, n, pages, write_p=0.4, gaps=(0, 0, 5, 100, 3000)):
    recs = []
    for _ in range(n):
        op = Op.WRITE if rng.random() < write_p else Op.READ
        recs.append(AccessRecord(op, rng.choice(pages) * 4096 + rng.randrange(64) * 64, rng.choice(gaps)))
    return Trace.from_records(recs)


@pytest.fixture
def rng():
    return random.Random(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
