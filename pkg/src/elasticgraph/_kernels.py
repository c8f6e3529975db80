"""Compiled inner loops for nearest-node search and per-node accumulation."""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _row_scan(x, phi, i):
    k, m = phi.shape
    best = np.inf
    runner = np.inf
    bj = 0
    for j in range(k):
        d = 0.0
        for c in range(m):
            t = x[i, c] - phi[j, c]
            d += t * t
        if d < best:
            runner = best
            best = d
            bj = j
        elif d < runner:
            runner = d
    return bj, best, runner


@njit(cache=True, nogil=True)
def scan(x, phi, idx, sq, second):
    """Exact nearest node (lowest index on ties), its squared distance, and the second-nearest distance."""
    for i in range(x.shape[0]):
        bj, best, runner = _row_scan(x, phi, i)
        idx[i] = bj
        sq[i] = best
        second[i] = np.sqrt(runner)


@njit(cache=True, nogil=True)
def _sqdist_row(x, phi, i, j):
    d = 0.0
    for c in range(x.shape[1]):
        t = x[i, c] - phi[j, c]
        d += t * t
    return d


@njit(cache=True, nogil=True)
def update(x, phi, near, lower, top_node, top_shift, runner_shift, added, idx, sq, second):
    """Refresh a partition after nodes moved or were added/removed.

    ``near[i]`` is the previous nearest node in the new indexing (-1 if it was
    removed) and ``lower[i]`` the previous lower bound on the distance to all
    other nodes. Surviving nodes moved by at most ``top_shift`` (node
    ``top_node``) or ``runner_shift`` (all others). Points whose bound cannot
    certify the nearest node are rescanned. Returns the number of rescans.
    """
    rescanned = 0
    for i in range(x.shape[0]):
        j = near[i]
        ok = j >= 0
        if ok:
            best = _sqdist_row(x, phi, i, j)
            shift = runner_shift if j == top_node else top_shift
            lo = lower[i] - shift
            bj = j
            rb = np.sqrt(best)
            for a in added:
                d = _sqdist_row(x, phi, i, a)
                rd = np.sqrt(d)
                if d < best:
                    lo = min(lo, rb)
                    best = d
                    rb = rd
                    bj = a
                else:
                    lo = min(lo, rd)
            ok = rb * (1.0 + 1e-10) < lo
        if ok:
            idx[i] = bj
            sq[i] = best
            second[i] = lo
        else:
            bj, best, runner = _row_scan(x, phi, i)
            idx[i] = bj
            sq[i] = best
            second[i] = np.sqrt(runner)
            rescanned += 1
    return rescanned


@njit(cache=True, nogil=True)
def accumulate(assign, wx, w, n_nodes):
    """Per-node total weight and weighted coordinate sums; negative assignments are skipped."""
    m = wx.shape[1]
    counts = np.zeros(n_nodes)
    sums = np.zeros((n_nodes, m))
    for i in range(assign.shape[0]):
        j = assign[i]
        if j < 0:
            continue
        counts[j] += w[i]
        for c in range(m):
            sums[j, c] += wx[i, c]
    return counts, sums
