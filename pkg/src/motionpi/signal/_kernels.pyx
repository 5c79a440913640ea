# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled accelerometry kernels.

Every routine here has a twin in ``_pykernels`` and both must produce
bit-identical output: sums are strictly sequential and no FMA contraction
is allowed (see setup.py).
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, floor

cnp.import_array()


def enmo(const double[::1] ax, const double[::1] ay, const double[::1] az):
    cdef Py_ssize_t i, n = ax.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double v
    with nogil:
        for i in range(n):
            v = sqrt(ax[i] * ax[i] + ay[i] * ay[i] + az[i] * az[i]) - 1.0
            o[i] = v if v > 0.0 else 0.0
    return out


def bout_reduce(const double[::1] t, const double[::1] ax, const double[::1] ay,
                const double[::1] az, double t0, double bout_seconds,
                long long carry_index=-1, double carry_sum=0.0, long long carry_count=0):
    cdef Py_ssize_t i, n = t.shape[0]
    cdef Py_ssize_t m = 0
    idx = np.empty(n, dtype=np.int64)
    sums = np.empty(n, dtype=np.float64)
    counts = np.empty(n, dtype=np.int64)
    cdef long long[::1] vi = idx
    cdef double[::1] vs = sums
    cdef long long[::1] vc = counts
    cdef long long b, cur = 0
    cdef double v
    with nogil:
        for i in range(n):
            b = <long long>floor((t[i] - t0) / bout_seconds)
            v = sqrt(ax[i] * ax[i] + ay[i] * ay[i] + az[i] * az[i]) - 1.0
            if v < 0.0:
                v = 0.0
            if m == 0 or b != cur:
                cur = b
                vi[m] = b
                if m == 0 and b == carry_index:
                    vs[m] = carry_sum
                    vc[m] = carry_count
                else:
                    vs[m] = 0.0
                    vc[m] = 0
                m += 1
            vs[m - 1] += v
            vc[m - 1] += 1
    return idx[:m], sums[:m], counts[:m]


def window_counts(const unsigned char[::1] flags, Py_ssize_t window):
    cdef Py_ssize_t i, n = flags.shape[0]
    out = np.empty(n, dtype=np.int64)
    cdef long long[::1] o = out
    cdef long long running = 0
    with nogil:
        for i in range(n):
            running += flags[i]
            if i >= window:
                running -= flags[i - window]
            o[i] = running
    return out
