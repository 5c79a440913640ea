"""The compiled and fallback kernels must agree bit for bit."""
import numpy as np
import pytest

from motionpi.signal import kernels
from motionpi.signal import _pykernels
from tests import oracles

BACKENDS = kernels.available_backends()


def test_cython_backend_built():
    # the package is built with the extension; a missing .so means a broken install
    assert "cython" in BACKENDS


@pytest.mark.parametrize("seed", range(5))
def test_backends_bit_identical(seed):
    rng = np.random.default_rng(seed)
    n = 10_000
    t = np.sort(rng.uniform(0, 600, n))
    t = np.unique(t)
    ax, ay, az = (rng.normal(0, 0.5, len(t)) for _ in range(3))
    results = {}
    for name, mod in BACKENDS.items():
        e = mod.enmo(ax, ay, az)
        idx, sums, counts = mod.bout_reduce(t, ax, ay, az, 0.0, 15.0, 0, 1.25, 7)
        flags = (sums / counts > 0.5).astype(np.uint8)
        w = mod.window_counts(flags, 28)
        results[name] = (e, idx, sums, counts, w)
    ref = results.pop("python")
    for other in results.values():
        for a, b in zip(ref, other):
            np.testing.assert_array_equal(a, b)


def test_bout_reduce_sequential_sum():
    t = np.arange(960) / 32.0
    ax = np.linspace(0, 2, 960)
    zero = np.zeros(960)
    for mod in BACKENDS.values():
        idx, sums, counts = mod.bout_reduce(t, ax, zero, zero, 0.0, 15.0)
        assert idx.tolist() == [0, 1] and counts.tolist() == [480, 480]
        acc = 0.0
        for v in ax[:480].tolist():
            acc += oracles.enmo(v, 0.0, 0.0)
        assert sums[0] == acc


def test_window_counts_matches_enumeration():
    rng = np.random.default_rng(9)
    flags = rng.integers(0, 2, 300).astype(np.uint8)
    expect = [int(flags[max(0, i - 27): i + 1].sum()) for i in range(300)]
    for mod in BACKENDS.values():
        assert mod.window_counts(flags, 28).tolist() == expect


def test_empty_input():
    e = np.empty(0)
    idx, sums, counts = _pykernels.bout_reduce(e, e, e, e, 0.0, 15.0)
    assert len(idx) == 0
