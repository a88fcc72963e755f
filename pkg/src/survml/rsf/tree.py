"""Survival trees grown by log-rank splitting.

The split search scores every midpoint between distinct sorted values of a
candidate column in O(m log m). Moving one row into the left child changes
the observed-minus-expected sum by ``delta - H(t)`` (H the node's
Nelson-Aalen hazard at the row's time), and the variance by terms that a
pair of Fenwick trees over event-time ranks can supply. The chosen split's
statistic is then recomputed directly from the partition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

_REL_TIE = 1e-12


@numba.njit(cache=True)
def _fen_add(tree, i, v):
    i += 1
    while i < tree.shape[0]:
        tree[i] += v
        i += i & (-i)


@numba.njit(cache=True)
def _fen_sum_i(tree, i):
    s = 0
    while i > 0:
        s += tree[i]
        i -= i & (-i)
    return s


@numba.njit(cache=True)
def _fen_sum_f(tree, i):
    s = 0.0
    while i > 0:
        s += tree[i]
        i -= i & (-i)
    return s


@numba.njit(cache=True)
def _node_event_table(rows, times, events):
    """Distinct event times of a node with event counts and risk-set sizes.

    Returns (evt, d, Y, rep, rank, n_evt): ``rep[k]`` is one row with an
    event at ``evt[k]``; ``rank[i]`` counts event times <= the time of
    ``rows[i]``.
    """
    m = rows.shape[0]
    tt = np.empty(m)
    for i in range(m):
        tt[i] = times[rows[i]]
    srt = np.argsort(tt, kind="mergesort")
    evt = np.empty(m)
    d = np.empty(m)
    Y = np.empty(m)
    rep = np.empty(m, dtype=np.int64)
    rank = np.empty(m, dtype=np.int64)
    n_evt = 0
    i = 0
    while i < m:
        t = tt[srt[i]]
        j = i
        de = 0
        r_ev = -1
        while j < m and tt[srt[j]] == t:
            if events[rows[srt[j]]] == 1:
                de += 1
                r_ev = rows[srt[j]]
            j += 1
        if de > 0:
            evt[n_evt] = t
            d[n_evt] = de
            Y[n_evt] = m - i
            rep[n_evt] = r_ev
            n_evt += 1
        for q in range(i, j):
            rank[srt[q]] = n_evt
        i = j
    return evt[:n_evt], d[:n_evt], Y[:n_evt], rep[:n_evt], rank, n_evt


@numba.njit(cache=True)
def _scan_column(xs, ev, rank, Hc, Ac, Wc, n_evt, ev_total, min_node):
    """Best admissible threshold of one column for the incremental log-rank score."""
    m = xs.shape[0]
    o = np.argsort(xs, kind="mergesort")
    cnt = np.zeros(n_evt + 2, dtype=np.int64)
    sw = np.zeros(n_evt + 2)
    nL = 0
    evL = 0
    oe = 0.0
    A = 0.0
    Q = 0.0
    best = -1.0
    best_pos = -1
    for i in range(m - 1):
        q = o[i]
        r = rank[q]
        c_le = _fen_sum_i(cnt, r + 1)
        s_le = _fen_sum_f(sw, r + 1)
        S = s_le + Wc[r] * (nL - c_le)
        Q += Wc[r] + 2.0 * S
        _fen_add(cnt, r, 1)
        _fen_add(sw, r, Wc[r])
        nL += 1
        evL += ev[q]
        oe += ev[q] - Hc[r]
        A += Ac[r]
        if xs[q] < xs[o[i + 1]]:
            if nL >= min_node and m - nL >= min_node and evL >= 1 and ev_total - evL >= 1:
                V = A - Q
                if V > 1e-12 * max(A, 1.0):
                    stat = oe * oe / V
                    if stat > best + _REL_TIE * abs(best):
                        best = stat
                        best_pos = i
    if best_pos < 0:
        return -1.0, 0.0
    lo = xs[o[best_pos]]
    hi = xs[o[best_pos + 1]]
    mid = lo + (hi - lo) * 0.5
    if mid >= hi:
        mid = lo
    return best, mid


@numba.njit(cache=True)
def logrank_partition(times, events, rows, left):
    """Two-sample log-rank statistic (O - E)^2 / V for ``rows`` split by ``left``."""
    m = rows.shape[0]
    tt = np.empty(m)
    for i in range(m):
        tt[i] = times[rows[i]]
    srt = np.argsort(tt, kind="mergesort")
    n_left = 0
    for i in range(m):
        if left[i]:
            n_left += 1
    oe = 0.0
    var = 0.0
    left_before = 0
    i = 0
    while i < m:
        t = tt[srt[i]]
        j = i
        d = 0
        dl = 0
        nl_here = 0
        while j < m and tt[srt[j]] == t:
            if left[srt[j]]:
                nl_here += 1
            if events[rows[srt[j]]] == 1:
                d += 1
                if left[srt[j]]:
                    dl += 1
            j += 1
        if d > 0:
            Y = m - i
            YL = n_left - left_before
            oe += dl - YL * d / Y
            if Y > 1:
                var += (YL / Y) * (1.0 - YL / Y) * (Y - d) / (Y - 1.0) * d
        left_before += nl_here
        i = j
    if var <= 0.0:
        return 0.0
    return oe * oe / var


@numba.njit(cache=True)
def _split_node(X, times, events, rows, cols, min_node):
    """Search the candidate columns; returns (column, value, statistic) or column -1."""
    m = rows.shape[0]
    evt, d, Y, rep, rank, n_evt = _node_event_table(rows, times, events)
    if m < 2 * min_node or n_evt < 2:
        return -1, 0.0, 0.0
    Hc = np.zeros(n_evt + 1)
    Ac = np.zeros(n_evt + 1)
    Wc = np.zeros(n_evt + 1)
    for k in range(n_evt):
        c = d[k] * (Y[k] - d[k]) / (Y[k] - 1.0) if Y[k] > 1.0 else 0.0
        Hc[k + 1] = Hc[k] + d[k] / Y[k]
        Ac[k + 1] = Ac[k] + c / Y[k]
        Wc[k + 1] = Wc[k] + c / (Y[k] * Y[k])
    ev = np.empty(m, dtype=np.int64)
    ev_total = 0
    for i in range(m):
        ev[i] = events[rows[i]]
        ev_total += ev[i]
    xs = np.empty(m)
    best = 0.0
    best_col = -1
    best_val = 0.0
    for c_i in range(cols.shape[0]):
        col = cols[c_i]
        for i in range(m):
            xs[i] = X[rows[i], col]
        stat, val = _scan_column(xs, ev, rank, Hc, Ac, Wc, n_evt, ev_total, min_node)
        if stat > 0.0 and stat > best + _REL_TIE * abs(best):
            best = stat
            best_col = col
            best_val = val
    if best_col < 0:
        return -1, 0.0, 0.0
    left = np.empty(m, dtype=np.bool_)
    for i in range(m):
        left[i] = X[rows[i], best_col] <= best_val
    return best_col, best_val, logrank_partition(times, events, rows, left)


@numba.njit(cache=True)
def _grow_tree(X, times, events, grid_index, n_grid, mtry, min_node, seed):
    n, p = X.shape
    np.random.seed(seed)
    inbag = np.zeros(n, dtype=np.int64)
    rows = np.empty(n, dtype=np.int64)
    for i in range(n):
        r = np.random.randint(0, n)
        rows[i] = r
        inbag[r] += 1

    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left_child = np.full(cap, -1, dtype=np.int64)
    right_child = np.full(cap, -1, dtype=np.int64)
    node_stat = np.zeros(cap)
    node_leaf = np.full(cap, -1, dtype=np.int64)
    start = np.zeros(cap, dtype=np.int64)
    stop = np.zeros(cap, dtype=np.int64)
    leaf_ptr = np.zeros(cap + 1, dtype=np.int64)
    leaf_grid = np.empty(n, dtype=np.int64)
    leaf_inc = np.empty(n)
    leaf_mort = np.zeros(cap)

    colbuf = np.arange(p)
    buf = np.empty(n, dtype=np.int64)
    stack = np.empty(cap, dtype=np.int64)
    sp = 0
    stack[sp] = 0
    sp += 1
    start[0] = 0
    stop[0] = n
    n_nodes = 1
    n_leaves = 0
    n_inc = 0
    while sp > 0:
        sp -= 1
        node = stack[sp]
        s = start[node]
        e = stop[node]
        sub = rows[s:e]
        m = e - s
        col = -1
        val = 0.0
        stat = 0.0
        if m >= 2 * min_node:
            for i in range(mtry):
                j = np.random.randint(i, p)
                tmp = colbuf[i]
                colbuf[i] = colbuf[j]
                colbuf[j] = tmp
            cols = np.sort(colbuf[:mtry].copy())
            col, val, stat = _split_node(X, times, events, sub, cols, min_node)
        if col >= 0:
            nl = 0
            nr = 0
            for i in range(m):
                r = sub[i]
                if X[r, col] <= val:
                    rows[s + nl] = r
                    nl += 1
                else:
                    buf[nr] = r
                    nr += 1
            for i in range(nr):
                rows[s + nl + i] = buf[i]
            lc = n_nodes
            rc = n_nodes + 1
            n_nodes += 2
            feature[node] = col
            threshold[node] = val
            node_stat[node] = stat
            left_child[node] = lc
            right_child[node] = rc
            start[lc] = s
            stop[lc] = s + nl
            start[rc] = s + nl
            stop[rc] = e
            stack[sp] = rc
            sp += 1
            stack[sp] = lc
            sp += 1
        else:
            evt, d, Y, rep, rank, n_evt = _node_event_table(sub, times, events)
            node_leaf[node] = n_leaves
            leaf_ptr[n_leaves] = n_inc
            mort = 0.0
            for k in range(n_evt):
                g = grid_index[rep[k]]
                inc = d[k] / Y[k]
                leaf_grid[n_inc] = g
                leaf_inc[n_inc] = inc
                n_inc += 1
                mort += inc * (n_grid - g)
            leaf_mort[n_leaves] = mort
            n_leaves += 1
            leaf_ptr[n_leaves] = n_inc
    return (
        feature[:n_nodes], threshold[:n_nodes], left_child[:n_nodes], right_child[:n_nodes],
        node_stat[:n_nodes], node_leaf[:n_nodes], leaf_ptr[: n_leaves + 1],
        leaf_grid[:n_inc], leaf_inc[:n_inc], leaf_mort[:n_leaves], inbag,
    )


@numba.njit(cache=True)
def _apply(X, feature, threshold, left_child, right_child, node_leaf):
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left_child[node]
            else:
                node = right_child[node]
        out[i] = node_leaf[node]
    return out


@dataclass(frozen=True)
class SurvivalTree:
    """Array-encoded binary tree; ``feature[node] == -1`` marks a terminal node.

    Terminal cumulative hazards are stored sparsely: leaf ``l`` owns the
    increments ``leaf_inc[leaf_ptr[l]:leaf_ptr[l+1]]`` at grid positions
    ``leaf_grid[...]``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    split_stat: np.ndarray
    node_leaf: np.ndarray
    leaf_ptr: np.ndarray
    leaf_grid: np.ndarray
    leaf_inc: np.ndarray
    leaf_mortality: np.ndarray
    inbag_counts: np.ndarray
    n_grid: int

    @property
    def n_leaves(self) -> int:
        return self.leaf_mortality.shape[0]

    @property
    def used_columns(self) -> set[int]:
        return set(int(f) for f in self.feature[self.feature >= 0])

    @property
    def oob_mask(self) -> np.ndarray:
        return self.inbag_counts == 0

    def leaf_chf(self, leaf: int) -> np.ndarray:
        """Nelson-Aalen cumulative hazard of one terminal node on the event-time grid."""
        jumps = np.zeros(self.n_grid)
        lo, hi = self.leaf_ptr[leaf], self.leaf_ptr[leaf + 1]
        np.add.at(jumps, self.leaf_grid[lo:hi], self.leaf_inc[lo:hi])
        return np.cumsum(jumps)

    def apply(self, X) -> np.ndarray:
        """Terminal-node (leaf) index reached by every row of ``X``."""
        X = np.ascontiguousarray(X, dtype=float)
        return _apply(X, self.feature, self.threshold, self.left, self.right, self.node_leaf)

    def predict_mortality(self, X) -> np.ndarray:
        return self.leaf_mortality[self.apply(X)]


def grow_tree(X, times, events, grid_index, n_grid, mtry, min_node_size, seed) -> SurvivalTree:
    parts = _grow_tree(
        np.ascontiguousarray(X, dtype=float),
        np.asarray(times, dtype=float),
        np.asarray(events, dtype=np.int64),
        np.asarray(grid_index, dtype=np.int64),
        int(n_grid), int(mtry), int(min_node_size), int(seed),
    )
    arrays = [np.array(a) for a in parts]
    for a in arrays:
        a.setflags(write=False)
    return SurvivalTree(*arrays, n_grid=int(n_grid))


def best_split(X, times, events, columns=None, min_node_size: int = 1):
    """Best log-rank split of a node holding every row of ``X``.

    Returns ``(column, value, statistic)``, or ``None`` when the node is
    terminal. Equal statistics resolve to the lower column, then the lower
    value.
    """
    X = np.ascontiguousarray(X, dtype=float)
    cols = np.arange(X.shape[1]) if columns is None else np.sort(np.asarray(columns, dtype=np.int64))
    rows = np.arange(X.shape[0], dtype=np.int64)
    col, val, stat = _split_node(
        X, np.asarray(times, dtype=float), np.asarray(events, dtype=np.int64),
        rows, cols, int(min_node_size),
    )
    if col < 0:
        return None
    return int(col), float(val), float(stat)


def logrank_statistic(times, events, left) -> float:
    """Two-sample log-rank chi-square statistic between ``left`` and its complement."""
    times = np.asarray(times, dtype=float)
    rows = np.arange(times.shape[0], dtype=np.int64)
    return float(logrank_partition(times, np.asarray(events, dtype=np.int64), rows,
                                   np.asarray(left, dtype=np.bool_)))
