"""Independent brute-force reference implementations used only by tests.

Nothing here imports motionpi's kernels: every number is recomputed with
plain Python loops from the definition.
"""
import math


def enmo(ax, ay, az):
    v = math.sqrt(ax * ax + ay * ay + az * az) - 1.0
    return v if v > 0.0 else 0.0


def triggers(t, ax, ay, az, start_t, end_t, threshold=0.1006, tol=1e-9, bout=15.0,
             epoch=420.0, required=294.0, rate=32.0, coverage=0.5):
    """Edge-trigger times of the trailing-epoch MVPA detector, by enumeration."""
    n_bouts = 0
    while start_t + (n_bouts + 1) * bout <= end_t:
        n_bouts += 1
    sums = [0.0] * n_bouts
    counts = [0] * n_bouts
    for i in range(len(t)):
        k = math.floor((t[i] - start_t) / bout)
        if 0 <= k < n_bouts:
            sums[k] += enmo(ax[i], ay[i], az[i])
            counts[k] += 1
    is_mvpa = []
    for k in range(n_bouts):
        ok = counts[k] >= coverage * bout * rate
        mean = sums[k] / counts[k] if counts[k] else 0.0
        is_mvpa.append(ok and mean > threshold + tol)
    per_epoch = round(epoch / bout)
    out = []
    prev = False
    for k in range(n_bouts):
        if k + 1 < per_epoch:
            cur = False
        else:
            seconds = sum(bout for j in range(k + 1 - per_epoch, k + 1) if is_mvpa[j])
            cur = seconds >= required
        if cur and not prev:
            out.append(start_t + (k + 1) * bout)
        prev = cur
    return out
