"""numpy fallback for the compiled kernels in ``_kernels.pyx``.

Results are bit-identical to the compiled versions: per-bout sums use
``np.add.accumulate`` (strictly sequential) rather than ``reduceat``,
which sums pairwise.
"""
import numpy as np


def enmo(ax, ay, az):
    v = np.sqrt(ax * ax + ay * ay + az * az) - 1.0
    return np.maximum(v, 0.0)


def bout_reduce(t, ax, ay, az, t0, bout_seconds, carry_index=-1, carry_sum=0.0, carry_count=0):
    n = len(t)
    if n == 0:
        empty = np.empty(0, dtype=np.int64)
        return empty, np.empty(0, dtype=np.float64), empty.copy()
    b = np.floor((t - t0) / bout_seconds).astype(np.int64)
    e = enmo(ax, ay, az)
    starts = np.flatnonzero(np.r_[True, b[1:] != b[:-1]])
    counts = np.diff(np.r_[starts, n]).astype(np.int64)
    idx = b[starts]
    m = len(starts)
    # pad each bout into a row; column 0 holds the carried partial sum
    width = int(counts.max()) + 1
    grid = np.zeros((m, width), dtype=np.float64)
    rows = np.repeat(np.arange(m), counts)
    cols = np.arange(n) - np.repeat(starts, counts) + 1
    grid[rows, cols] = e
    if idx[0] == carry_index:
        grid[0, 0] = carry_sum
        counts[0] += carry_count
    sums = np.add.accumulate(grid, axis=1)[:, -1]
    return idx, sums, counts


def window_counts(flags, window):
    c = np.cumsum(flags, dtype=np.int64)
    out = c.copy()
    if window < len(c):
        out[window:] -= c[:-window]
    return out
