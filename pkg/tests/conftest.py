import numpy as np
import pytest

from rso2stat.ingest import Rso2Series, Session

_ACCEPTANCE = []


def record_acceptance(ac, title, passed, detail):
    _ACCEPTANCE.append((ac, title, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for ac, title, passed, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"{ac} {'PASS' if passed else 'FAIL'}  {title}: {detail}")


def make_series(values, cadence=30.0, start=0.0, limit=15.0):
    values = np.asarray(values, dtype=float)
    times = start + cadence * np.arange(values.size)
    return Rso2Series.from_raw(times, values, limit)


def make_session(pre_values, post_values, cadence=30.0, gap=1800.0, subject="s"):
    pre = make_series(pre_values, cadence)
    start = pre.times[-1] + cadence
    end = start + gap
    post = make_series(post_values, cadence, start=end + cadence)
    return Session(subject, pre, post, (start, end))


@pytest.fixture
def ar1_series():
    """A 240-point AR(1) series with about 20 % of points censored."""
    gen = np.random.default_rng(12)
    n = 240
    e = gen.normal(0, 3.0, n)
    x = np.empty(n)
    x[0] = e[0]
    for i in range(1, n):
        x[i] = 0.6 * x[i - 1] + e[i]
    t = np.arange(n)
    return make_series(19.0 + 4.0 * np.sin(2 * np.pi * t / n) + x)
