# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels.

Contracts and accumulation order match ``_kernels_py``; see that module
for the full docstrings.
"""

from libc.math cimport exp, log1p, INFINITY

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef inline double _logaddexp(double a, double b) noexcept nogil:
    if a == -INFINITY:
        return b
    if b == -INFINITY:
        return a
    if a >= b:
        return a + log1p(exp(b - a))
    return b + log1p(exp(a - b))


def partial_likelihood_scan(s_in, is_event_in, block_end_in):
    """Negative log partial likelihood and d(nll)/d(score), sorted order."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] s = np.ascontiguousarray(s_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] ev = np.ascontiguousarray(is_event_in, dtype=np.uint8)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] be = np.ascontiguousarray(block_end_in, dtype=np.int64)
    cdef Py_ssize_t n = s.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] rls = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] place = np.full(n, -INFINITY, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] c = np.empty(n, dtype=np.float64)
    cdef double running = -INFINITY
    cdef double nll = 0.0
    cdef double d
    cdef Py_ssize_t k

    for k in range(n):
        running = _logaddexp(running, s[k])
        rls[k] = running

    for k in range(n):
        if ev[k]:
            d = rls[be[k]]
            nll += d - s[k]
            place[be[k]] = _logaddexp(place[be[k]], -d)

    running = -INFINITY
    for k in range(n - 1, -1, -1):
        running = _logaddexp(running, place[k])
        c[k] = exp(s[k] + running)
        if ev[k]:
            c[k] -= 1.0

    return nll, c


def exact_marginal_enum(probs_in, factors_in, sizes_in, Py_ssize_t event_row):
    """Full enumeration of the latent-assignment expectation."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] probs = np.ascontiguousarray(probs_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] factors = np.ascontiguousarray(factors_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] sizes = np.ascontiguousarray(sizes_in, dtype=np.int64)
    cdef Py_ssize_t n_rows = probs.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] digits = np.zeros(n_rows, dtype=np.int64)
    cdef double total = 0.0
    cdef double chunk_total = 0.0
    cdef double weight, denom
    cdef Py_ssize_t j, pos
    cdef long long count = 0
    cdef long long chunk = 1 << 16
    cdef bint done = False

    # Chunked accumulation mirrors the numpy backend's summation grouping.
    while not done:
        weight = 1.0
        denom = 0.0
        for j in range(n_rows):
            weight *= probs[j, digits[j]]
            denom += factors[j, digits[j]]
        chunk_total += weight * factors[event_row, digits[event_row]] / denom
        count += 1
        if count % chunk == 0:
            total += chunk_total
            chunk_total = 0.0

        pos = n_rows - 1
        while True:
            digits[pos] += 1
            if digits[pos] < sizes[pos]:
                break
            digits[pos] = 0
            pos -= 1
            if pos < 0:
                done = True
                break

    return total + chunk_total


def concordance_counts(time_in, event_in, risk_in):
    """Harrell pair counts: (concordance score sum, comparable pairs)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] t = np.ascontiguousarray(time_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] ev = np.ascontiguousarray(event_in, dtype=np.uint8)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] risk = np.ascontiguousarray(risk_in, dtype=np.float64)
    cdef Py_ssize_t n = t.shape[0]
    cdef double score = 0.0
    cdef long long comparable = 0
    cdef Py_ssize_t i, j

    for i in range(n):
        if not ev[i]:
            continue
        for j in range(n):
            if t[i] < t[j]:
                comparable += 1
                if risk[i] > risk[j]:
                    score += 1.0
                elif risk[i] == risk[j]:
                    score += 0.5

    return score, int(comparable)
