"""Synthetic attributed graphs and the structural / contextual anomaly injection protocol."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .graph import AttributedGraph


@dataclass(frozen=True)
class InjectionSpec:
    kind: str
    clique_size: int = 15
    num_cliques: int = 0
    num_contextual: int = 0
    candidate_pool_size: int = 50
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _base_labels(graph: AttributedGraph) -> np.ndarray:
    if graph.labels is None:
        return np.zeros(graph.num_nodes, dtype=np.int64)
    return graph.labels.copy()


def inject_structural(graph: AttributedGraph, clique_size: int, count: int, seed: int = 0):
    """Turn ``count`` disjoint random groups of normal nodes into cliques.

    Returns ``(graph, labels, groups)``; the new graph carries the labels.
    """
    labels = _base_labels(graph)
    pool = np.flatnonzero(labels == 0)
    if count * clique_size > len(pool):
        raise ValueError(
            f"cannot draw {count} groups of {clique_size} from {len(pool)} normal nodes"
        )
    rng = np.random.default_rng(seed)
    chosen = rng.choice(pool, size=count * clique_size, replace=False)
    groups = [np.sort(g) for g in chosen.reshape(count, clique_size)] if count else []
    edges = [tuple(e) for e in graph.edges]
    for g in groups:
        edges.extend((int(u), int(v)) for a, u in enumerate(g) for v in g[a + 1 :])
        labels[g] = 1
    out = AttributedGraph.from_edges(graph.num_nodes, edges, graph.attributes, labels)
    return out, labels, [g.tolist() for g in groups]


def inject_contextual(graph: AttributedGraph, count: int, pool_size: int = 50, seed: int = 0):
    """Replace the attributes of ``count`` random normal nodes.

    For each target, ``pool_size`` other nodes are sampled and the attribute
    row farthest (Euclidean) from the target's original row is copied in.
    Returns ``(graph, labels, sources)`` with ``sources[t] = copied node``.
    """
    n = graph.num_nodes
    if count + pool_size > n:
        raise ValueError(f"count + pool_size = {count + pool_size} exceeds {n} nodes")
    labels = _base_labels(graph)
    normal = np.flatnonzero(labels == 0)
    if count > len(normal):
        raise ValueError(f"only {len(normal)} normal nodes available")
    rng = np.random.default_rng(seed)
    targets = rng.choice(normal, size=count, replace=False)
    x = graph.attributes
    new_x = x.copy()
    sources = {}
    for t in targets:
        others = np.delete(np.arange(n), t)
        cand = rng.choice(others, size=pool_size, replace=False)
        dist = np.linalg.norm(x[cand] - x[t], axis=1)
        src = int(cand[np.argmax(dist)])
        new_x[t] = x[src]
        sources[int(t)] = src
        labels[t] = 1
    out = AttributedGraph(graph.neighbors, new_x, labels)
    return out, labels, sources


def inject_mixed(graph: AttributedGraph, rate: float = 0.05, clique_size: int = 15,
                 pool_size: int = 50, seed: int = 0):
    """Structural and contextual anomalies in a 1:1 ratio at roughly ``rate``.

    The number of cliques is ``max(1, round(rate * N / (2 * clique_size)))``
    and the same number of nodes is then made contextual.
    Returns ``(graph, labels, manifest)``.
    """
    n = graph.num_nodes
    cliques = max(1, int(round(rate * n / (2 * clique_size))))
    ss = np.random.SeedSequence(seed).spawn(2)
    g1, _, groups = inject_structural(graph, clique_size, cliques, int(ss[0].generate_state(1)[0]))
    n_ctx = cliques * clique_size
    g2, labels, sources = inject_contextual(g1, n_ctx, pool_size, int(ss[1].generate_state(1)[0]))
    manifest = {
        "spec": InjectionSpec("mixed", clique_size, cliques, n_ctx, pool_size, seed).to_dict(),
        "structural_groups": groups,
        "contextual_sources": {str(k): v for k, v in sorted(sources.items())},
        "num_anomalies": int(labels.sum()),
    }
    return g2, labels, manifest


def synth_graph(block_sizes: Sequence[int], intra_p: float, inter_p: float, attr_centers,
                attr_noise: float = 1.0, seed: int = 0) -> AttributedGraph:
    """Stochastic block model with Gaussian attribute blobs per block."""
    if not (0 <= intra_p <= 1 and 0 <= inter_p <= 1):
        raise ValueError("edge probabilities must lie in [0, 1]")
    centers = np.atleast_2d(np.asarray(attr_centers, dtype=np.float64))
    if centers.shape[0] != len(block_sizes):
        raise ValueError("need one attribute centre per block")
    rng = np.random.default_rng(seed)
    block = np.repeat(np.arange(len(block_sizes)), block_sizes)
    n = len(block)
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(block[iu] == block[ju], intra_p, inter_p)
    keep = rng.random(len(iu)) < prob
    x = centers[block] + attr_noise * rng.standard_normal((n, centers.shape[1]))
    return AttributedGraph.from_edges(n, zip(iu[keep], ju[keep]), x)


def sbm_fixture(seed: int = 0, num_nodes: int = 300, num_blocks: int = 2, intra_p: float = 0.06,
                inter_p: float = 0.004, num_features: int = 16, separation: float = 2.0,
                attr_noise: float = 1.0) -> AttributedGraph:
    """The SBM test bed: equal blocks, one attribute centre per block."""
    sizes = [num_nodes // num_blocks] * num_blocks
    sizes[-1] += num_nodes - sum(sizes)
    centers = np.zeros((num_blocks, num_features))
    width = num_features // num_blocks
    for b in range(num_blocks):
        centers[b, b * width : (b + 1) * width] = separation
    return synth_graph(sizes, intra_p, inter_p, centers, attr_noise, seed)
