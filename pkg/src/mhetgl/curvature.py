"""Ollivier-Ricci edge curvature and the curvature-purified adjacency."""

from __future__ import annotations

import os
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp

from .graph import AttributedGraph
from .transport import transport_plan

WORKERS_ENV = "MHETGL_WORKERS"


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class SparseDistribution:
    """Probability mass on a sorted set of node ids."""

    support: np.ndarray
    mass: np.ndarray

    def __post_init__(self):
        support = np.asarray(self.support, dtype=np.int64)
        mass = np.asarray(self.mass, dtype=np.float64)
        if support.shape != mass.shape:
            raise ValueError("support and mass must have equal length")
        if len(np.unique(support)) != len(support):
            raise ValueError("support ids must be distinct")
        order = np.argsort(support)
        object.__setattr__(self, "support", support[order])
        object.__setattr__(self, "mass", mass[order])

    def is_normalized(self, tol: float = 1e-12) -> bool:
        return bool(np.all(self.mass >= 0)) and abs(self.mass.sum() - 1.0) <= tol

    def as_dict(self) -> dict:
        return {int(k): float(v) for k, v in zip(self.support, self.mass)}


def neighbor_distribution(graph: AttributedGraph, node: int, tau: float = 0.5) -> SparseDistribution:
    """Lazy random-walk distribution: ``tau`` on the node, the rest spread over its neighbours."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    nbrs = graph.neighbors[node]
    if not nbrs:
        raise ValueError(f"node {node} is isolated; its neighbour distribution is undefined")
    support = np.array((node,) + tuple(nbrs))
    mass = np.full(len(support), (1.0 - tau) / len(nbrs))
    mass[0] = tau
    keep = mass > 0
    return SparseDistribution(support[keep], mass[keep])


def hop_distances(graph: AttributedGraph, sources, targets, max_depth: Optional[int] = None) -> np.ndarray:
    """Shortest-path hop counts by breadth-first search from each source.

    Pairs not reached (disconnected, or beyond ``max_depth``) get the sentinel
    distance ``N``.
    """
    n = graph.num_nodes
    targets = np.asarray(targets)
    out = np.full((len(sources), len(targets)), float(n))
    for r, s in enumerate(sources):
        dist = {int(s): 0}
        queue = deque([int(s)])
        while queue:
            u = queue.popleft()
            if max_depth is not None and dist[u] >= max_depth:
                continue
            for w in graph.neighbors[u]:
                if w not in dist:
                    dist[w] = dist[u] + 1
                    queue.append(w)
        for c, t in enumerate(targets):
            d = dist.get(int(t))
            if d is not None:
                out[r, c] = d
    return out


def wasserstein(
    p: SparseDistribution,
    q: SparseDistribution,
    ground: Union[np.ndarray, Callable, AttributedGraph],
) -> float:
    """Exact 1-Wasserstein distance between two sparse distributions.

    ``ground`` is either a precomputed ``(len(p), len(q))`` cost matrix, a
    callable ``ground(p.support, q.support)`` returning one, or a graph whose
    hop distance is used.
    """
    for name, dist in (("p", p), ("q", q)):
        if not dist.is_normalized(1e-9):
            raise ValueError(f"{name} is not a normalized distribution (sum={dist.mass.sum()!r})")
    if isinstance(ground, AttributedGraph):
        cost = hop_distances(ground, p.support, q.support)
    elif callable(ground):
        cost = np.asarray(ground(p.support, q.support), dtype=np.float64)
    else:
        cost = np.asarray(ground, dtype=np.float64)
    value, _ = transport_plan(p.mass, q.mass, cost)
    return max(value, 0.0)


class _EdgeGround:
    """Hop distances between the closed neighbourhoods of an edge's endpoints.

    For adjacent ``i, j`` every pair in ``N[i] x N[j]`` is at most three hops
    apart, so the distance is read off ``A`` and ``A @ A``.
    """

    def __init__(self, graph: AttributedGraph):
        a = graph.adjacency().astype(np.int64)
        self.a = a.tocsr()
        self.a2 = (a @ a).tocsr()

    def __call__(self, src, dst) -> np.ndarray:
        one = self.a[src][:, dst].toarray() > 0
        two = self.a2[src][:, dst].toarray() > 0
        cost = np.where(one, 1.0, np.where(two, 2.0, 3.0))
        cost[src[:, None] == dst[None, :]] = 0.0
        return cost


def edge_curvature(graph: AttributedGraph, i: int, j: int, tau: float = 0.5, ground=None) -> float:
    """Ollivier-Ricci curvature ``1 - W(m_i, m_j)`` of an existing edge."""
    if i == j or not graph.has_edge(i, j):
        raise ValueError(f"({i}, {j}) is not an edge")
    mi = neighbor_distribution(graph, i, tau)
    mj = neighbor_distribution(graph, j, tau)
    if ground is None:
        ground = _EdgeGround(graph)
    return 1.0 - wasserstein(mi, mj, ground)


_WORKER_STATE = {}


def _init_worker(graph, tau):
    _WORKER_STATE["graph"] = graph
    _WORKER_STATE["tau"] = tau
    _WORKER_STATE["ground"] = _EdgeGround(graph)


def _curvature_chunk(edges):
    g, tau, ground = _WORKER_STATE["graph"], _WORKER_STATE["tau"], _WORKER_STATE["ground"]
    return [edge_curvature(g, int(u), int(v), tau, ground) for u, v in edges]


def curvatures(graph: AttributedGraph, tau: float = 0.5, workers: Optional[int] = None) -> np.ndarray:
    """Curvature of every edge, aligned with ``graph.edges``.

    Output does not depend on ``workers``; each edge is an independent exact solve.
    """
    edges = graph.edges
    if len(edges) == 0:
        return np.zeros(0)
    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(edges) < 64:
        _init_worker(graph, tau)
        try:
            return np.array(_curvature_chunk(edges))
        finally:
            _WORKER_STATE.clear()
    chunks = np.array_split(edges, workers * 4)
    with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(graph, tau)) as pool:
        parts = list(pool.map(_curvature_chunk, chunks))
    return np.array([k for part in parts for k in part])


def raw_curvature_matrix(graph: AttributedGraph, kappa: np.ndarray) -> sp.csr_matrix:
    """Symmetric sparse matrix holding ``kappa`` on each edge (explicit zeros kept)."""
    n = graph.num_nodes
    e = graph.edges
    rows = np.concatenate([e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 1], e[:, 0]])
    vals = np.concatenate([kappa, kappa])
    m = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    m.sort_indices()
    return m


def purified_adjacency(graph: AttributedGraph, tau: float = 0.5, kappa: Optional[np.ndarray] = None,
                       workers: Optional[int] = None) -> sp.csr_matrix:
    """Row-wise softmax of curvature weights over each closed neighbourhood.

    The self entry enters the softmax with raw weight 0. Isolated nodes get a
    unit self-loop.
    """
    if kappa is None:
        kappa = curvatures(graph, tau, workers)
    n = graph.num_nodes
    raw = raw_curvature_matrix(graph, kappa)
    rows, cols, vals = [], [], []
    for i in range(n):
        lo, hi = raw.indptr[i], raw.indptr[i + 1]
        idx = np.concatenate([raw.indices[lo:hi], [i]])
        logits = np.concatenate([raw.data[lo:hi], [0.0]])
        w = np.exp(logits - logits.max())
        w /= w.sum()
        rows.append(np.full(len(idx), i))
        cols.append(idx)
        vals.append(w)
    out = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    out.sort_indices()
    return out
