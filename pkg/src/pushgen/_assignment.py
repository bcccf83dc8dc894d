"""Exact Euclidean assignment for equal-size point clouds.

On the line the sorted matching is optimal.  Small instances in higher
dimension go to SciPy's dense shortest-augmenting-path solver.  Large ones
use a sparse successive-shortest-path solver on a k-nearest-neighbour
candidate graph; the resulting dual potentials are then checked against every
pair of points, violated pairs are added to the graph, and the solve resumes.
When no pair violates dual feasibility the matching is optimal for the full
dense problem, so both routes return the exact optimum.
"""
from __future__ import annotations

import heapq

import numba as nb
import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

DENSE_MAX = 1200
_DUAL_TOL = 1e-12
_MAX_ROUNDS = 500


def assignment(x: np.ndarray, y: np.ndarray, method: str = "auto") -> tuple[float, np.ndarray]:
    """Optimal matching of rows of ``x`` to rows of ``y``.

    Returns ``(mean cost, col4row)`` where ``col4row[i]`` is the partner of
    ``x[i]``.
    """
    n = len(x)
    if method == "auto":
        if x.shape[1] == 1:
            method = "sorted"
        else:
            method = "dense" if n <= DENSE_MAX else "sparse"
    if method == "sorted":
        # on the line the monotone matching is optimal for any convex cost of x - y
        if x.shape[1] != 1:
            raise ValueError("sorted matching is only exact in one dimension")
        col4row = np.empty(n, dtype=np.int64)
        col4row[np.argsort(x[:, 0], kind="stable")] = np.argsort(y[:, 0], kind="stable")
    elif method == "dense":
        C = cdist(x, y)
        rows, cols = linear_sum_assignment(C)
        col4row = np.empty(n, dtype=np.int64)
        col4row[rows] = cols
    elif method == "sparse":
        col4row = _sparse_assignment(np.ascontiguousarray(x, float), np.ascontiguousarray(y, float))
    else:
        raise ValueError(f"unknown assignment method {method!r}")
    cost = float(np.linalg.norm(x - y[col4row], axis=1).mean())
    return cost, col4row


def _sparse_assignment(x, y):
    n, dim = x.shape
    k = min(n, 48 if dim <= 2 else 16)
    rows, cols = _knn_edges(x, y, k)
    u = np.zeros(n)
    v = np.zeros(n)
    row4col = np.full(n, -1, np.int64)
    col4row = np.full(n, -1, np.int64)
    for _ in range(_MAX_ROUNDS):
        key = np.unique(rows * n + cols)
        rr, cc = key // n, key % n
        cost = np.linalg.norm(x[rr] - y[cc], axis=1)
        indptr = np.searchsorted(rr, np.arange(n + 1))
        # new edges may have negative reduced cost: lower u and release the row
        red = cost - u[rr] - v[cc]
        minred = np.full(n, np.inf)
        np.minimum.at(minred, rr, red)
        bad = np.nonzero(minred < 0)[0]
        if len(bad):
            u[bad] += minred[bad]
            matched = bad[col4row[bad] >= 0]
            row4col[col4row[matched]] = -1
            col4row[bad] = -1
        free = np.nonzero(col4row == -1)[0]
        status = _ssp(indptr, cc, cost, u, v, row4col, col4row, free)
        if status != 0:
            stuck = -1 - status
            free_cols = np.nonzero(row4col == -1)[0]
            rows = np.concatenate([rr, np.full(len(free_cols), stuck)])
            cols = np.concatenate([cc, free_cols])
            continue
        vi, vj = _dual_violations(x, y, u, v, _DUAL_TOL, 128)
        if len(vi) == 0:
            return col4row
        rows = np.concatenate([rr, vi])
        cols = np.concatenate([cc, vj])
    # float noise kept re-opening the same edges; settle it densely
    _, col4row = linear_sum_assignment(cdist(x, y))
    return col4row.astype(np.int64)


def _knn_edges(x, y, k):
    n = len(x)
    _, fwd = cKDTree(y).query(x, k=k)
    _, bwd = cKDTree(x).query(y, k=k)
    fwd = fwd.reshape(n, -1)
    bwd = bwd.reshape(n, -1)
    rows = np.concatenate([np.repeat(np.arange(n), fwd.shape[1]), bwd.ravel()])
    cols = np.concatenate([fwd.ravel(), np.repeat(np.arange(n), bwd.shape[1])])
    return rows.astype(np.int64), cols.astype(np.int64)


@nb.njit(cache=True)
def _ssp(indptr, indices, costs, u, v, row4col, col4row, free_rows):
    # Dijkstra-based shortest augmenting paths with reduced costs c - u - v.
    n = u.shape[0]
    inf = np.inf
    dist = np.full(n, inf)
    pred = np.full(n, -1, np.int64)
    scanned = np.zeros(n, np.bool_)
    touched = np.empty(n, np.int64)
    srows = np.empty(n, np.int64)
    scols = np.empty(n, np.int64)
    for s in free_rows:
        ntouch = 0
        nsr = 0
        nsc = 0
        heap = [(0.0, np.int64(0))]
        heap.pop()
        i = s
        srows[nsr] = i
        nsr += 1
        sink = -1
        base = 0.0
        while True:
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                if scanned[j]:
                    continue
                nd = base + costs[p] - u[i] - v[j]
                if nd < dist[j]:
                    if dist[j] == inf:
                        touched[ntouch] = j
                        ntouch += 1
                    dist[j] = nd
                    pred[j] = i
                    heapq.heappush(heap, (nd, j))
            found = False
            j = -1
            while len(heap) > 0:
                dj, j = heapq.heappop(heap)
                if scanned[j] or dj > dist[j]:
                    continue
                found = True
                break
            if not found:
                for t in range(ntouch):
                    jj = touched[t]
                    dist[jj] = inf
                    scanned[jj] = False
                    pred[jj] = -1
                return -1 - s
            scanned[j] = True
            scols[nsc] = j
            nsc += 1
            base = dist[j]
            if row4col[j] == -1:
                sink = j
                break
            i = row4col[j]
            srows[nsr] = i
            nsr += 1
        u[s] += base
        for t in range(1, nsr):
            r = srows[t]
            u[r] += base - dist[col4row[r]]
        for t in range(nsc):
            jj = scols[t]
            v[jj] -= base - dist[jj]
        j = sink
        while True:
            i = pred[j]
            row4col[j] = i
            nxt = col4row[i]
            col4row[i] = j
            if i == s:
                break
            j = nxt
        for t in range(ntouch):
            jj = touched[t]
            dist[jj] = inf
            scanned[jj] = False
            pred[jj] = -1
    return 0


@nb.njit(cache=True)
def _dual_violations(x, y, u, v, tol, max_per_row):
    # pairs with |x_i - y_j| < u_i + v_j - tol, scanning columns sorted on the
    # first coordinate so rows only visit a window
    n = x.shape[0]
    order = np.argsort(y[:, 0])
    ys = y[order]
    key = ys[:, 0].copy()
    vs = v[order]
    vmax = vs.max()
    cnt = 0
    out_i = np.empty(n * max_per_row, np.int64)
    out_j = np.empty(n * max_per_row, np.int64)
    for i in range(n):
        reach = u[i] + vmax - tol
        if reach <= 0:
            continue
        lo = np.searchsorted(key, x[i, 0] - reach)
        hi = np.searchsorted(key, x[i, 0] + reach)
        found = 0
        for q in range(lo, hi):
            thr = u[i] + vs[q] - tol
            if thr <= 0:
                continue
            thr2 = thr * thr
            s = 0.0
            for t in range(x.shape[1]):
                dd = x[i, t] - ys[q, t]
                s += dd * dd
                if s >= thr2:
                    break
            if s < thr2:
                out_i[cnt] = i
                out_j[cnt] = order[q]
                cnt += 1
                found += 1
                if found >= max_per_row:
                    break
    return out_i[:cnt], out_j[:cnt]
