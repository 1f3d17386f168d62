"""Attributed graph container, file ingestion, node splits and heterophily."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)


class GraphFormatError(ValueError):
    """Raised when a graph input file cannot be parsed."""


@dataclass(frozen=True)
class AttributedGraph:
    """Undirected graph with a dense node attribute matrix.

    Parameters
    ----------
    neighbors : tuple of tuple of int
        Sorted, deduplicated neighbor ids per node. Self-loops are never stored.
    attributes : (N, d_in) ndarray
    labels : (N,) int ndarray or None
        Binary anomaly labels when known.
    """

    neighbors: tuple
    attributes: np.ndarray
    labels: Optional[np.ndarray] = None
    _edges: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        n = len(self.neighbors)
        attrs = np.ascontiguousarray(self.attributes, dtype=np.float64)
        if attrs.ndim != 2 or attrs.shape[0] != n:
            raise ValueError(f"attributes must have {n} rows, got shape {attrs.shape}")
        attrs.setflags(write=False)
        object.__setattr__(self, "attributes", attrs)
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64).copy()
            if labels.shape != (n,):
                raise ValueError(f"labels must have length {n}, got {labels.shape}")
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)
        sets = [frozenset(nbrs) for nbrs in self.neighbors]
        for i, nbrs in enumerate(self.neighbors):
            if list(nbrs) != sorted(sets[i]):
                raise ValueError(f"neighbors of node {i} must be sorted and duplicate-free")
            for j in nbrs:
                if j == i:
                    raise ValueError(f"self-loop stored at node {i}")
                if not 0 <= j < n:
                    raise ValueError(f"neighbor id {j} of node {i} out of range")
                if i not in sets[j]:
                    raise ValueError(f"asymmetric adjacency: {j} in N({i}) but {i} not in N({j})")
        rows = [(i, j) for i, nbrs in enumerate(self.neighbors) for j in nbrs if i < j]
        edges = np.array(rows, dtype=np.int64).reshape(-1, 2)
        edges.setflags(write=False)
        object.__setattr__(self, "_edges", edges)

    @classmethod
    def from_edges(cls, num_nodes: int, edges: Iterable, attributes, labels=None) -> "AttributedGraph":
        """Build a graph from an iterable of (u, v) pairs.

        Direction, duplicates and self-loops in ``edges`` are ignored.
        """
        sets = [set() for _ in range(num_nodes)]
        for u, v in edges:
            u, v = int(u), int(v)
            if not (0 <= u < num_nodes and 0 <= v < num_nodes):
                raise ValueError(f"edge ({u}, {v}) references a node outside 0..{num_nodes - 1}")
            if u == v:
                continue
            sets[u].add(v)
            sets[v].add(u)
        neighbors = tuple(tuple(sorted(s)) for s in sets)
        return cls(neighbors, attributes, labels)

    @property
    def num_nodes(self) -> int:
        return len(self.neighbors)

    @property
    def num_features(self) -> int:
        return self.attributes.shape[1]

    @property
    def edges(self) -> np.ndarray:
        """(E, 2) array of undirected edges with ``u < v``, lexicographically sorted."""
        return self._edges

    @property
    def num_edges(self) -> int:
        return len(self._edges)

    def degree(self, node: int) -> int:
        return len(self.neighbors[node])

    def degrees(self) -> np.ndarray:
        return np.array([len(n) for n in self.neighbors], dtype=np.int64)

    def has_edge(self, u: int, v: int) -> bool:
        nbrs = self.neighbors[u]
        k = np.searchsorted(nbrs, v)
        return k < len(nbrs) and nbrs[k] == v

    def adjacency(self, self_loops: bool = False) -> sp.csr_matrix:
        """Binary symmetric adjacency as CSR with sorted column indices."""
        n = self.num_nodes
        e = self._edges
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        if self_loops:
            rows = np.concatenate([rows, np.arange(n)])
            cols = np.concatenate([cols, np.arange(n)])
        a = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        a.sort_indices()
        return a

    def with_labels(self, labels) -> "AttributedGraph":
        return AttributedGraph(self.neighbors, self.attributes, labels)

    def permuted(self, perm: Sequence[int]) -> "AttributedGraph":
        """Relabel nodes so that old node ``perm[k]`` becomes new node ``k``."""
        perm = np.asarray(perm)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))
        edges = [(inv[u], inv[v]) for u, v in self._edges]
        labels = None if self.labels is None else self.labels[perm]
        return AttributedGraph.from_edges(self.num_nodes, edges, self.attributes[perm], labels)


@dataclass(frozen=True)
class NodeSplits:
    train_ids: np.ndarray
    val_ids: np.ndarray
    test_ids: np.ndarray

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("train_ids", "val_ids", "test_ids")}

    @classmethod
    def from_dict(cls, d: dict) -> "NodeSplits":
        return cls(*(np.asarray(d[k], dtype=np.int64) for k in ("train_ids", "val_ids", "test_ids")))


def _parse_ints(path: Path):
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            yield lineno, text


def read_attributes(path) -> np.ndarray:
    rows = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if not text:
                continue
            try:
                row = [float(x) for x in text.split(",")]
            except ValueError:
                raise GraphFormatError(f"{path}:{lineno}: non-numeric attribute value") from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise GraphFormatError(
                    f"{path}:{lineno}: expected {width} attribute columns, found {len(row)}"
                )
            rows.append(row)
    if not rows:
        raise GraphFormatError(f"{path}: no attribute rows")
    return np.array(rows, dtype=np.float64)


def read_edges(path, num_nodes: int) -> list:
    edges = []
    for lineno, text in _parse_ints(Path(path)):
        parts = text.split()
        if len(parts) != 2:
            raise GraphFormatError(f"{path}:{lineno}: expected two node ids, got {text!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise GraphFormatError(f"{path}:{lineno}: non-integer node id in {text!r}") from None
        if u < 0 or v < 0:
            raise GraphFormatError(f"{path}:{lineno}: negative node id")
        if u >= num_nodes or v >= num_nodes:
            raise GraphFormatError(
                f"{path}:{lineno}: node id {max(u, v)} >= {num_nodes} (number of attribute rows)"
            )
        edges.append((u, v))
    return edges


def read_labels(path, num_nodes: Optional[int] = None) -> np.ndarray:
    labels = []
    for lineno, text in _parse_ints(Path(path)):
        if text not in ("0", "1"):
            raise GraphFormatError(f"{path}:{lineno}: label must be 0 or 1, got {text!r}")
        labels.append(int(text))
    out = np.array(labels, dtype=np.int64)
    if num_nodes is not None and len(out) != num_nodes:
        raise GraphFormatError(f"{path}: {len(out)} labels for {num_nodes} nodes")
    return out


def load_graph(edge_path, attr_path, label_path=None) -> AttributedGraph:
    """Load a graph from an edge list, an attribute CSV and an optional label file.

    The node count is the number of attribute rows; edges are read as undirected.
    """
    attrs = read_attributes(attr_path)
    edges = read_edges(edge_path, len(attrs))
    labels = read_labels(label_path, len(attrs)) if label_path is not None else None
    return AttributedGraph.from_edges(len(attrs), edges, attrs, labels)


def save_graph(graph: AttributedGraph, edge_path, attr_path, label_path=None) -> None:
    with open(edge_path, "w") as fh:
        for u, v in graph.edges:
            fh.write(f"{u} {v}\n")
    with open(attr_path, "w") as fh:
        for row in graph.attributes:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
    if label_path is not None:
        if graph.labels is None:
            raise ValueError("graph has no labels to write")
        with open(label_path, "w") as fh:
            fh.writelines(f"{int(y)}\n" for y in graph.labels)


def split_nodes(graph_or_n, ratios=(6, 1, 3), seed: int = 0) -> NodeSplits:
    """Seeded uniform train/val/test partition of node ids.

    Sizes are ``floor(N * r_train)``, ``floor(N * r_val)`` and the remainder,
    with ``ratios`` normalized to sum to one.
    """
    n = graph_or_n if isinstance(graph_or_n, (int, np.integer)) else graph_or_n.num_nodes
    r = np.asarray(ratios, dtype=np.float64)
    if r.shape != (3,) or np.any(r < 0) or r.sum() <= 0:
        raise ValueError(f"ratios must be three non-negative numbers with positive sum, got {ratios}")
    r = r / r.sum()
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(np.floor(n * r[0] + 1e-9))
    n_val = min(int(np.floor(n * r[1] + 1e-9)), n - n_train)
    return NodeSplits(
        np.sort(perm[:n_train]),
        np.sort(perm[n_train : n_train + n_val]),
        np.sort(perm[n_train + n_val :]),
    )


def heterophily_ratio(graph: AttributedGraph, labels=None) -> float:
    """Mean over non-isolated nodes of the fraction of differently labelled neighbors."""
    y = graph.labels if labels is None else np.asarray(labels)
    if y is None:
        raise ValueError("labels required")
    if len(y) != graph.num_nodes:
        raise ValueError(f"labels length {len(y)} != number of nodes {graph.num_nodes}")
    ratios = []
    for v, nbrs in enumerate(graph.neighbors):
        if not nbrs:
            continue
        ratios.append(np.mean(y[list(nbrs)] != y[v]))
    isolated = graph.num_nodes - len(ratios)
    if isolated:
        logger.info("heterophily_ratio: skipped %d isolated nodes", isolated)
    if not ratios:
        raise ValueError("graph has no edges")
    return float(np.mean(ratios))
