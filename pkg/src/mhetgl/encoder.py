"""Heterophilic graph encoder: anomaly-aware aggregation, attention and fusion."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Mapping, Optional

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .autodiff import Tensor

BRANCHES = ("pur", "aug")
LEAKY_SLOPE = 0.01


@dataclass(frozen=True)
class BranchStructure:
    """Constant pieces of one refined neighbourhood.

    ``agg`` holds the off-diagonal aggregation coefficients
    ``(1 + w_ij) / sqrt(|N~_i| |N~_j|)``; ``rows``/``cols`` list the closed
    neighbourhood (self included) used by attention, in CSR order.
    """

    agg: sp.csr_matrix
    rows: np.ndarray
    cols: np.ndarray
    num_nodes: int

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.rows, minlength=self.num_nodes)


def _closed_pattern(adj: sp.spmatrix) -> sp.csr_matrix:
    n = adj.shape[0]
    pattern = (sp.csr_matrix(adj, copy=True) != 0).astype(np.float64) + sp.identity(n, format="csr")
    pattern = (pattern != 0).astype(np.float64).tocsr()
    pattern.sort_indices()
    return pattern


def branch_structure(adj: sp.spmatrix, weights: Optional[sp.spmatrix] = None) -> BranchStructure:
    """Build the aggregation constants for a weighted adjacency.

    ``adj`` fixes the neighbourhood (its non-zero pattern plus self loops);
    ``weights`` supplies ``w_ij`` and defaults to ``adj`` itself.
    """
    pattern = _closed_pattern(adj)
    n = pattern.shape[0]
    sizes = np.diff(pattern.indptr).astype(np.float64)
    w = sp.csr_matrix(adj if weights is None else weights)
    coo = pattern.tocoo()
    off = coo.row != coo.col
    r, c = coo.row[off], coo.col[off]
    wij = np.asarray(w[r, c]).ravel() if len(r) else np.zeros(0)
    coef = (1.0 + wij) / np.sqrt(sizes[r] * sizes[c])
    agg = sp.csr_matrix((coef, (r, c)), shape=(n, n))
    agg.sort_indices()
    return BranchStructure(agg, coo.row.astype(np.int64), coo.col.astype(np.int64), n)


def plain_structure(adj: sp.spmatrix) -> BranchStructure:
    """Closed neighbourhood of an unweighted adjacency (used by the assignment encoder)."""
    return branch_structure(adj, sp.csr_matrix(adj.shape))


def structural_aggregate(h, struct: BranchStructure, gamma) -> Tensor:
    """``gamma * h_i + sum_j (1 + w_ij) / sqrt(|N~_i||N~_j|) * h_j``."""
    h = ad.constant(h)
    if h.shape[0] != struct.num_nodes:
        raise ad.ShapeError(f"structural_aggregate: {h.shape[0]} rows for {struct.num_nodes} nodes")
    return ad.mul_scalar(h, gamma) + ad.spmm(struct.agg, h)


def attention_aggregate(h, struct: BranchStructure, weight, attn) -> Tensor:
    """Single-head attention over closed neighbourhoods.

    ``alpha_ij = softmax_j relu(a . [W h_i || W h_j])`` and the output row is
    ``sum_j alpha_ij W h_j``. ``attn`` has length ``2 * d_out``: the first half
    scores the centre node, the second half the neighbour.
    """
    h, weight, attn = ad.constant(h), ad.constant(weight), ad.constant(attn)
    d_out = weight.shape[1]
    if attn.shape != (2 * d_out,):
        raise ad.ShapeError(f"attention_aggregate: attention vector {attn.shape}, expected ({2 * d_out},)")
    wh = h @ weight
    a = ad.transpose(ad.reshape(attn, (2, d_out)))
    scores = wh @ a
    src = ad.gather_rows(scores, struct.rows) @ _PICK_FIRST
    dst = ad.gather_rows(scores, struct.cols) @ _PICK_SECOND
    logits = ad.relu(ad.reshape(src + dst, (len(struct.rows),)))
    alpha = ad.segment_softmax(logits, struct.rows, struct.num_nodes)
    msgs = ad.scale_rows(ad.gather_rows(wh, struct.cols), alpha)
    return ad.segment_sum(msgs, struct.rows, struct.num_nodes)


_PICK_FIRST = np.array([[1.0], [0.0]])
_PICK_SECOND = np.array([[0.0], [1.0]])


def hge_layer(h, structures: Mapping[str, BranchStructure], params: Mapping[str, Tensor],
              prefix: str, variant: str = "full") -> Tensor:
    """One encoder layer: per-branch aggregation and attention, then linear fusion.

    ``variant`` ``"pur_only"`` / ``"aug_only"`` replaces the other branch by
    zeros before fusion.
    """
    outs = []
    for b in BRANCHES:
        p = f"{prefix}.{b}"
        hb = structural_aggregate(h, structures[b], params[f"{p}.gamma"])
        hb = attention_aggregate(hb, structures[b], params[f"{p}.weight"], params[f"{p}.attn"])
        if (variant == "pur_only" and b == "aug") or (variant == "aug_only" and b == "pur"):
            hb = ad.constant(np.zeros(hb.shape))
        outs.append(hb)
    fused = ad.concat(outs, axis=1) @ params[f"{prefix}.fuse.weight"]
    return ad.add_row(fused, params[f"{prefix}.fuse.bias"])


def encode(x, structures: Mapping[str, BranchStructure], params: Mapping[str, Tensor],
           num_layers: int, variant: str = "full") -> Tensor:
    """Stack ``num_layers`` encoder layers with leaky-ReLU in between."""
    if num_layers < 1:
        raise ValueError("num_layers must be at least 1")
    h = ad.constant(x)
    for l in range(num_layers):
        h = hge_layer(h, structures, params, f"layer{l}", variant)
        if l < num_layers - 1:
            h = ad.leaky_relu(h, LEAKY_SLOPE)
    return h


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_encoder_params(rng: np.random.Generator, in_dim: int, hidden: int,
                        num_layers: int) -> Dict[str, np.ndarray]:
    params = {}
    for l in range(num_layers):
        d_in = in_dim if l == 0 else hidden
        for b in BRANCHES:
            p = f"layer{l}.{b}"
            params[f"{p}.gamma"] = np.array(1.0)
            params[f"{p}.weight"] = glorot(rng, d_in, hidden)
            params[f"{p}.attn"] = rng.uniform(-0.1, 0.1, size=2 * hidden)
        params[f"layer{l}.fuse.weight"] = glorot(rng, 2 * hidden, hidden)
        params[f"layer{l}.fuse.bias"] = np.zeros(hidden)
    return params
