"""Exact discrete optimal transport by the transportation simplex method.

The supports handled here are small (a node and its neighbours), so a dense
primal simplex over the bipartite transportation tableau is both exact and
fast enough.  Pivoting uses Dantzig's rule and falls back to Bland's rule if
the iteration count suggests degenerate cycling.
"""

from __future__ import annotations

from collections import deque

import numpy as np

_TOL = 1e-12


class TransportError(ValueError):
    pass


def _northwest_corner(a, b):
    m, n = len(a), len(b)
    ra, rb = a.copy(), b.copy()
    flow = np.zeros((m, n))
    basis = []
    i = j = 0
    while True:
        x = max(min(ra[i], rb[j]), 0.0)
        flow[i, j] = x
        basis.append((i, j))
        ra[i] -= x
        rb[j] -= x
        if i == m - 1 and j == n - 1:
            break
        if i == m - 1:
            j += 1
        elif j == n - 1 or ra[i] <= rb[j]:
            i += 1
        else:
            j += 1
    return flow, basis


def _potentials(cost, basis, m, n):
    adj = [[] for _ in range(m + n)]
    for i, j in basis:
        adj[i].append(m + j)
        adj[m + j].append(i)
    pot = np.full(m + n, np.nan)
    pot[0] = 0.0
    queue = deque([0])
    while queue:
        node = queue.popleft()
        for other in adj[node]:
            if np.isnan(pot[other]):
                if node < m:
                    pot[other] = cost[node, other - m] - pot[node]
                else:
                    pot[other] = cost[other, node - m] - pot[node]
                queue.append(other)
    return pot[:m], pot[m:], adj


def _tree_path(adj, start, goal):
    prev = {start: None}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        if node == goal:
            break
        for other in adj[node]:
            if other not in prev:
                prev[other] = node
                queue.append(other)
    path = [goal]
    while path[-1] != start:
        path.append(prev[path[-1]])
    return path[::-1]


def transport_plan(a, b, cost, max_iter: int = 10_000):
    """Solve ``min <plan, cost>`` over couplings of ``a`` and ``b``.

    Parameters
    ----------
    a : (m,) array_like
        Source masses, non-negative.
    b : (n,) array_like
        Target masses, non-negative, same total as ``a``.
    cost : (m, n) array_like

    Returns
    -------
    value : float
    plan : (m, n) ndarray
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    cost = np.asarray(cost, dtype=np.float64)
    m, n = len(a), len(b)
    if cost.shape != (m, n):
        raise TransportError(f"cost shape {cost.shape} does not match masses ({m}, {n})")
    if m == 0 or n == 0:
        raise TransportError("empty support")
    if np.any(a < 0) or np.any(b < 0):
        raise TransportError("negative mass")
    if abs(a.sum() - b.sum()) > 1e-9 * max(1.0, a.sum()):
        raise TransportError(f"unbalanced masses: {a.sum()!r} vs {b.sum()!r}")

    flow, basis = _northwest_corner(a, b)
    in_basis = np.zeros((m, n), dtype=bool)
    for cell in basis:
        in_basis[cell] = True
    scale = max(1.0, float(np.abs(cost).max()))
    bland_after = 50 * (m + n)

    for it in range(max_iter):
        u, v, adj = _potentials(cost, basis, m, n)
        reduced = cost - u[:, None] - v[None, :]
        reduced[in_basis] = 0.0
        if it < bland_after:
            flat = int(np.argmin(reduced))
            if reduced.flat[flat] >= -_TOL * scale:
                break
        else:
            candidates = np.flatnonzero(reduced < -_TOL * scale)
            if len(candidates) == 0:
                break
            flat = int(candidates[0])
        ei, ej = divmod(flat, n)

        # cycle: entering cell, then the tree path from column ej back to row ei
        path = _tree_path(adj, m + ej, ei)
        cells = []
        for p, q in zip(path[:-1], path[1:]):
            cells.append((q, p - m) if p >= m else (p, q - m))
        minus = cells[0::2]
        plus = cells[1::2]
        leave = min(minus, key=lambda c: (flow[c], c))
        theta = flow[leave]
        flow[ei, ej] += theta
        for c in minus:
            flow[c] -= theta
        for c in plus:
            flow[c] += theta
        flow[leave] = 0.0
        in_basis[leave] = False
        in_basis[ei, ej] = True
        basis[basis.index(leave)] = (ei, ej)
    else:
        raise TransportError(f"transportation simplex did not converge in {max_iter} pivots")

    np.maximum(flow, 0.0, out=flow)
    return float(np.sum(flow * cost)), flow
