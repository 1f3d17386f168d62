"""Training-free neighbourhood refinement: purified and GDV-augmented adjacencies."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .curvature import curvatures, purified_adjacency, raw_curvature_matrix
from .graph import AttributedGraph
from .graphlets import GdvMatrix, gdv as compute_gdv

logger = logging.getLogger(__name__)

# cosine similarities are compared against delta with this slack so that
# exactly parallel integer vectors pass delta = 1
SIM_SLACK = 1e-12


def _unit_rows(counts):
    r = np.asarray(counts, dtype=np.float64)
    norms = np.linalg.norm(r, axis=1)
    out = np.zeros_like(r)
    nz = norms > 0
    out[nz] = r[nz] / norms[nz, None]
    return out, nz


def augmented_adjacency(graph: AttributedGraph, gdv: GdvMatrix, delta: float = 1.0,
                        block: int = 1024, return_raw: bool = False):
    """Degree-reweighted GDV-similarity graph, row-normalised.

    Every ordered pair with cosine similarity at least ``delta`` gets raw
    weight ``sim * (deg_i + deg_j)``; the diagonal is treated as an ordinary
    pair (``2 * deg_i``). Nodes with an all-zero GDV get a unit self-loop.
    """
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    n = graph.num_nodes
    if gdv.counts.shape[0] != n:
        raise ValueError("GDV rows do not match graph nodes")
    unit, nz = _unit_rows(gdv.counts)
    deg = graph.degrees().astype(np.float64)
    active = np.flatnonzero(nz)
    rows, cols, vals = [], [], []
    for start in range(0, len(active), block):
        ids = active[start : start + block]
        sim = np.minimum(unit[ids] @ unit[active].T, 1.0)
        r, c = np.nonzero(sim >= delta - SIM_SLACK)
        src, dst = ids[r], active[c]
        rows.append(src)
        cols.append(dst)
        vals.append(sim[r, c] * (deg[src] + deg[dst]))
    iso = np.flatnonzero(~nz)
    rows.append(iso)
    cols.append(iso)
    vals.append(np.ones(len(iso)))
    raw = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    raw.sort_indices()
    norm = sp.diags(1.0 / np.asarray(raw.sum(axis=1)).ravel()) @ raw
    norm = norm.tocsr()
    norm.sort_indices()
    return (norm, raw) if return_raw else norm


@dataclass(frozen=True)
class RefinedTopology:
    """Precomputed refinement artifacts consumed by the encoder.

    ``a_pur`` and ``a_aug`` are row-stochastic CSR matrices that include the
    self entry of every node. ``kappa`` is aligned with ``graph.edges``.
    """

    a_pur: sp.csr_matrix
    a_aug: sp.csr_matrix
    kappa: np.ndarray
    raw_pur: sp.csr_matrix
    raw_aug: Optional[sp.csr_matrix]
    gdv: GdvMatrix

    @property
    def num_nodes(self) -> int:
        return self.a_pur.shape[0]


def refine_topology(graph: AttributedGraph, tau: float = 0.5, max_size: int = 4,
                    delta: float = 1.0, workers: Optional[int] = None) -> RefinedTopology:
    kappa = curvatures(graph, tau, workers)
    a_pur = purified_adjacency(graph, tau, kappa=kappa)
    counts = compute_gdv(graph, max_size, workers)
    a_aug, raw_aug = augmented_adjacency(graph, counts, delta, return_raw=True)
    logger.info("refined topology: %d pur entries, %d aug entries", a_pur.nnz, a_aug.nnz)
    return RefinedTopology(a_pur, a_aug, kappa, raw_curvature_matrix(graph, kappa), raw_aug, counts)


def gdv_edge_similarity(graph: AttributedGraph, gdv: GdvMatrix) -> np.ndarray:
    """Cosine similarity of GDVs across each edge, aligned with ``graph.edges``."""
    unit, _ = _unit_rows(gdv.counts)
    e = graph.edges
    return np.einsum("ij,ij->i", unit[e[:, 0]], unit[e[:, 1]])


def edge_tags(graph: AttributedGraph, labels) -> np.ndarray:
    """``aa``/``an``/``nn`` tag per edge from binary anomaly labels."""
    y = np.asarray(labels)
    e = graph.edges
    s = y[e[:, 0]] + y[e[:, 1]]
    return np.array(["nn", "an", "aa"])[s]


# ---- cache files ---------------------------------------------------------

def _write_triplets(path, mat: sp.csr_matrix, header):
    coo = mat.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k in order:
            w.writerow([int(coo.row[k]), int(coo.col[k]), repr(float(coo.data[k]))])


def _read_triplets(path, n):
    rows, cols, vals = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for r, c, v in reader:
            rows.append(int(r))
            cols.append(int(c))
            vals.append(float(v))
    m = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    m.sort_indices()
    return m


def save_topology(topo: RefinedTopology, graph: AttributedGraph, out_dir) -> dict:
    """Write the preprocessing cache; returns ``{name: path}``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "a_pur": out / "a_pur.csv",
        "a_aug": out / "a_aug.csv",
        "curvature": out / "curvature.csv",
        "gdv": out / "gdv.csv",
    }
    _write_triplets(paths["a_pur"], topo.a_pur, ["src", "dst", "weight"])
    _write_triplets(paths["a_aug"], topo.a_aug, ["src", "dst", "weight"])
    with open(paths["curvature"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["src", "dst", "kappa"])
        for (u, v), k in zip(graph.edges, topo.kappa):
            w.writerow([int(u), int(v), repr(float(k))])
    with open(paths["gdv"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node"] + [f"orbit{o}" for o in range(topo.gdv.num_orbits)])
        for i, row in enumerate(topo.gdv.counts):
            w.writerow([i] + [int(x) for x in row])
    return {k: str(v) for k, v in paths.items()}


def load_topology(graph: AttributedGraph, cache_dir) -> RefinedTopology:
    cache = Path(cache_dir)
    n = graph.num_nodes
    for name in ("a_pur.csv", "a_aug.csv", "curvature.csv", "gdv.csv"):
        if not (cache / name).exists():
            raise FileNotFoundError(f"{cache / name} missing; run the preprocess stage first")
    a_pur = _read_triplets(cache / "a_pur.csv", n)
    a_aug = _read_triplets(cache / "a_aug.csv", n)
    lookup = {}
    with open(cache / "curvature.csv", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for u, v, k in reader:
            lookup[(int(u), int(v))] = float(k)
    try:
        kappa = np.array([lookup[(int(u), int(v))] for u, v in graph.edges])
    except KeyError as exc:
        raise ValueError(f"curvature cache does not match graph (missing edge {exc})") from None
    with open(cache / "gdv.csv", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        counts = np.array([[int(x) for x in row[1:]] for row in reader], dtype=np.int64)
    t = 4 if len(header) - 1 == 15 else 3
    return RefinedTopology(a_pur, a_aug, kappa, raw_curvature_matrix(graph, kappa), None,
                           GdvMatrix(counts.reshape(n, -1), t))
