import numpy as np
import pytest

from motionpi.signal import AccelTrace


def make_trace(minutes_profile, rate=32.0, t0=0.0, seed=0, drop=0.0):
    """Build a trace from (seconds, kind) segments; kind in {'rest', 'walk', 'vigorous'} or a float g offset."""
    rng = np.random.default_rng(seed)
    ts, xs, ys, zs = [], [], [], []
    start = 0
    for seconds, kind in minutes_profile:
        n = int(round(seconds * rate))
        t = t0 + (start + np.arange(n)) / rate
        if isinstance(kind, float):
            x = np.zeros(n); y = np.zeros(n); z = np.full(n, kind)
        else:
            amp = {"rest": 0.0, "walk": 0.12, "vigorous": 0.6}[kind]
            noise = rng.normal(0.0, 0.01, (3, n))
            x = noise[0]
            y = noise[1]
            z = 1.0 + amp * np.sin(2 * np.pi * 2.0 * t) + noise[2]
        ts.append(t); xs.append(x); ys.append(y); zs.append(z)
        start += n
    cols = [np.concatenate(c) for c in (ts, xs, ys, zs)]
    if drop:
        keep = rng.random(len(cols[0])) >= drop
        cols = [c[keep] for c in cols]
    return AccelTrace(*(np.ascontiguousarray(c) for c in cols))


@pytest.fixture
def trace_factory():
    return make_trace


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
