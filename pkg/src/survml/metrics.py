"""Harrell's concordance index for right-censored outcomes.

A pair is comparable when the subject with the shorter time had the event,
or when the times are equal and exactly one of the two had the event (the
event subject should then carry the higher risk). Tied predicted risks
count one half.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .errors import DataError, NoComparablePairsError


@dataclass(frozen=True)
class ConcordanceResult:
    cindex: float
    concordant: int
    discordant: int
    tied_risk: int
    comparable_pairs: int


def _result(c: int, d: int, t: int) -> ConcordanceResult:
    total = c + d + t
    if total == 0:
        raise NoComparablePairsError("no comparable pairs: the concordance index is undefined")
    return ConcordanceResult((c + 0.5 * t) / total, c, d, t, total)


def _validate(times, events, risks):
    times = np.asarray(times, dtype=float).reshape(-1)
    events = np.asarray(events).reshape(-1).astype(np.int64)
    risks = np.asarray(risks, dtype=float).reshape(-1)
    if not (times.shape == events.shape == risks.shape):
        raise DataError("times, events and risks must have equal length")
    if np.isnan(risks).any() or np.isnan(times).any():
        raise DataError("times and risks must not contain NaN")
    return times, events, risks


@numba.njit(cache=True)
def _fenwick_add(tree, i, v):
    i += 1
    while i < tree.shape[0]:
        tree[i] += v
        i += i & (-i)


@numba.njit(cache=True)
def _fenwick_prefix(tree, i):
    # sum of entries with index < i
    s = 0
    while i > 0:
        s += tree[i]
        i -= i & (-i)
    return s


@numba.njit(cache=True)
def _concordance_counts(times, events, ranks, n_ranks):
    n = times.shape[0]
    order = np.argsort(-times, kind="mergesort")
    tree = np.zeros(n_ranks + 1, dtype=np.int64)
    inserted = 0
    conc = 0
    disc = 0
    tied = 0
    start = 0
    while start < n:
        stop = start
        t = times[order[start]]
        while stop < n and times[order[stop]] == t:
            stop += 1
        for q in range(start, stop):
            i = order[q]
            if events[i] == 0:
                _fenwick_add(tree, ranks[i], 1)
                inserted += 1
        for q in range(start, stop):
            i = order[q]
            if events[i] == 1:
                r = ranks[i]
                below = _fenwick_prefix(tree, r)
                upto = _fenwick_prefix(tree, r + 1)
                conc += below
                tied += upto - below
                disc += inserted - upto
        for q in range(start, stop):
            i = order[q]
            if events[i] == 1:
                _fenwick_add(tree, ranks[i], 1)
                inserted += 1
        start = stop
    return conc, disc, tied


def concordance_index(times, events, risks) -> ConcordanceResult:
    """O(n log n) concordance via a Fenwick tree over risk ranks."""
    times, events, risks = _validate(times, events, risks)
    uniq, ranks = np.unique(risks, return_inverse=True)
    c, d, t = _concordance_counts(times, events, ranks.astype(np.int64), uniq.size)
    return _result(int(c), int(d), int(t))


def concordance_oracle(times, events, risks) -> ConcordanceResult:
    """Reference implementation: explicit loop over all pairs."""
    times, events, risks = _validate(times, events, risks)
    times, events, risks = times.tolist(), events.tolist(), risks.tolist()
    n = len(times)
    c = d = t = 0
    for i in range(n):
        for j in range(i + 1, n):
            if times[i] < times[j]:
                first, second = i, j
            elif times[j] < times[i]:
                first, second = j, i
            elif events[i] + events[j] == 1:
                first, second = (i, j) if events[i] == 1 else (j, i)
            else:
                continue
            if events[first] != 1:
                continue
            if risks[first] > risks[second]:
                c += 1
            elif risks[first] < risks[second]:
                d += 1
            else:
                t += 1
    return _result(c, d, t)


def cindex(times, events, risks) -> float:
    return concordance_index(times, events, risks).cindex
