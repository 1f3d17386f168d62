"""Graphlet degree vectors for graphlets on up to four nodes.

Orbit numbering follows the usual convention:

====  ===========================  =====================
size  graphlet                     orbits
====  ===========================  =====================
2     edge                         0
3     path                         1 (end), 2 (middle)
3     triangle                     3
4     path                         4 (end), 5 (inner)
4     star                         6 (leaf), 7 (centre)
4     cycle                        8
4     paw (triangle + pendant)     9 (pendant), 10 (triangle, deg 2), 11 (deg 3)
4     diamond                      12 (deg 2), 13 (deg 3)
4     clique                       14
====  ===========================  =====================

Connected induced subgraphs are enumerated once each with the ESU scheme
(exclusive neighbourhood extension).
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .curvature import default_workers
from .graph import AttributedGraph

NUM_ORBITS = {3: 4, 4: 15}


@dataclass(frozen=True)
class GdvMatrix:
    counts: np.ndarray
    max_graphlet_size: int

    @property
    def num_orbits(self) -> int:
        return self.counts.shape[1]


def _orbits3(nodes, adj):
    a, b, c = nodes
    ab, ac, bc = b in adj[a], c in adj[a], c in adj[b]
    if ab and ac and bc:
        return ((a, 3), (b, 3), (c, 3))
    # path: the middle node touches both others
    if ab and ac:
        mid = a
    elif ab and bc:
        mid = b
    else:
        mid = c
    return tuple((v, 2 if v == mid else 1) for v in nodes)


# (edge count, sorted degree sequence) -> orbit by node degree
_FOUR = {
    (3, (1, 1, 2, 2)): {1: 4, 2: 5},
    (3, (1, 1, 1, 3)): {1: 6, 3: 7},
    (4, (2, 2, 2, 2)): {2: 8},
    (4, (1, 2, 2, 3)): {1: 9, 2: 10, 3: 11},
    (5, (2, 2, 3, 3)): {2: 12, 3: 13},
    (6, (3, 3, 3, 3)): {3: 14},
}


def _orbits4(nodes, adj):
    deg = [sum(1 for u in nodes if u != v and u in adj[v]) for v in nodes]
    table = _FOUR[(sum(deg) // 2, tuple(sorted(deg)))]
    return tuple((v, table[d]) for v, d in zip(nodes, deg))


def _count_from(roots, neighbors, max_size, num_nodes):
    adj = [set(n) for n in neighbors]
    counts = np.zeros((num_nodes, NUM_ORBITS[max_size]), dtype=np.int64)

    def extend(sub, ext, root):
        size = len(sub)
        if size == 3:
            for v, o in _orbits3(sub, adj):
                counts[v, o] += 1
        elif size == 4:
            for v, o in _orbits4(sub, adj):
                counts[v, o] += 1
            return
        if size == max_size:
            return
        ext = list(ext)
        closed = set(sub)
        for s in sub:
            closed |= adj[s]
        while ext:
            w = ext.pop()
            new_ext = ext + [u for u in adj[w] if u > root and u not in closed]
            extend(sub + (w,), new_ext, root)

    for v in roots:
        extend((v,), [u for u in adj[v] if u > v], v)
    return counts


def _gdv_chunk(args):
    return _count_from(*args)


def gdv(graph: AttributedGraph, max_size: int = 4, workers: Optional[int] = None) -> GdvMatrix:
    """Count, for every node, how often it occupies each graphlet orbit.

    Parameters
    ----------
    graph : AttributedGraph
    max_size : {3, 4}
        Largest graphlet size T.
    workers : int, optional
        Process count; results are identical for any value.
    """
    if max_size not in NUM_ORBITS:
        raise ValueError(f"max_size must be 3 or 4, got {max_size}")
    n = graph.num_nodes
    workers = default_workers() if workers is None else workers
    if workers <= 1 or n < 256:
        counts = _count_from(range(n), graph.neighbors, max_size, n)
    else:
        chunks = [range(k, n, workers) for k in range(workers)]
        with ProcessPoolExecutor(workers) as pool:
            parts = pool.map(_gdv_chunk, [(c, graph.neighbors, max_size, n) for c in chunks])
            counts = sum(parts)
    counts[:, 0] = graph.degrees()
    return GdvMatrix(counts, max_size)
