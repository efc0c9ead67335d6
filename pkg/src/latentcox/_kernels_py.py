"""Numpy implementations of the hot kernels.

Fallback backend used when the compiled extension is unavailable (see
``latentcox._backend``). Every function here matches the contract and the
accumulation order of its Cython twin in ``_kernels.pyx``; only the loop
vehicle differs.

All survival-scan inputs are in time-descending order. ``block_end[k]`` is
the last sorted position whose time ties position k, so positions
``0..block_end[k]`` are exactly the risk set of an event at position k.
"""

from __future__ import annotations

import numpy as np

_CHUNK = 1 << 16


def partial_likelihood_scan(
    s: np.ndarray, is_event: np.ndarray, block_end: np.ndarray
) -> tuple[float, np.ndarray]:
    """Negative log partial likelihood and its gradient w.r.t. the scores.

    ``s[k]`` is the log expected hazard factor of the record at sorted
    position k. Returns ``(nll, c)`` where ``c[k] = d nll / d s[k]``,

        nll  = sum over events k of (logsumexp(s[0..block_end[k]]) - s[k])
        c[k] = exp(s[k]) * sum over events i with block_end[i] >= k
               of exp(-D_i)  -  is_event[k]

    with D_i the event's risk-set logsumexp. The inner sum is evaluated as
    a reverse running logaddexp so that every term stays <= log(n).
    """
    s = np.ascontiguousarray(s, dtype=np.float64)
    ev = np.ascontiguousarray(is_event, dtype=np.uint8)
    be = np.ascontiguousarray(block_end, dtype=np.int64)
    n = s.shape[0]

    rls = np.logaddexp.accumulate(s)
    ev_mask = ev.astype(bool)
    d_event = rls[be[ev_mask]]
    nll = float(np.sum(d_event - s[ev_mask]))

    place = np.full(n, -np.inf)
    np.logaddexp.at(place, be[ev_mask], -d_event)
    suffix = np.logaddexp.accumulate(place[::-1])[::-1]

    with np.errstate(over="raise"):
        c = np.exp(s + suffix)
    c[ev_mask] -= 1.0
    return nll, c


def exact_marginal_enum(
    probs: np.ndarray, factors: np.ndarray, sizes: np.ndarray, event_row: int
) -> float:
    """Full enumeration of the latent-assignment expectation.

    Sums, over every joint assignment z of the risk set's latent classes,

        (prod_j probs[j, z_j]) * factors[event_row, z_event]
                               / (sum_j factors[j, z_j])

    Row j draws its class from ``0..sizes[j]-1``; columns past ``sizes[j]``
    are padding. Assignments are visited in lexicographic order with the
    last row varying fastest, accumulated chunk by chunk in that order.
    """
    probs = np.ascontiguousarray(probs, dtype=np.float64)
    factors = np.ascontiguousarray(factors, dtype=np.float64)
    sizes = np.ascontiguousarray(sizes, dtype=np.int64)
    n_rows = probs.shape[0]

    strides = np.ones(n_rows, dtype=np.int64)
    for j in range(n_rows - 2, -1, -1):
        strides[j] = strides[j + 1] * sizes[j + 1]
    total_assignments = int(strides[0] * sizes[0])

    rows = np.arange(n_rows)
    total = 0.0
    for start in range(0, total_assignments, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total_assignments), dtype=np.int64)
        digits = (idx[:, None] // strides[None, :]) % sizes[None, :]
        weight = np.prod(probs[rows[None, :], digits], axis=1)
        denom = np.sum(factors[rows[None, :], digits], axis=1)
        numer = factors[event_row, digits[:, event_row]]
        total += float(np.sum(weight * numer / denom))
    return total


def concordance_counts(
    time: np.ndarray, event: np.ndarray, risk: np.ndarray
) -> tuple[float, int]:
    """Harrell pair counts: (concordance score sum, comparable pairs).

    A pair (i, j) is comparable when t_i < t_j and record i is an event.
    The score credits 1 for risk_i > risk_j and 0.5 for a risk tie.
    """
    time = np.ascontiguousarray(time, dtype=np.float64)
    ev = np.ascontiguousarray(event, dtype=np.uint8).astype(bool)
    risk = np.ascontiguousarray(risk, dtype=np.float64)
    n = time.shape[0]

    score = 0.0
    comparable = 0
    rows = np.flatnonzero(ev)
    for start in range(0, rows.shape[0], 256):
        block = rows[start : start + 256]
        comp = time[block][:, None] < time[None, :]
        comparable += int(np.count_nonzero(comp))
        higher = comp & (risk[block][:, None] > risk[None, :])
        tied = comp & (risk[block][:, None] == risk[None, :])
        score += float(np.count_nonzero(higher)) + 0.5 * float(np.count_nonzero(tied))
    return score, comparable
