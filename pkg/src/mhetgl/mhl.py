"""Multi-hypersphere objective: soft communities, centres, losses and scores."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoder import BranchStructure, attention_aggregate

CENTER_MODES = ("init", "update", "train")


def assign(z, struct: BranchStructure, weight, attn) -> Tensor:
    """Soft community assignment: one attention layer projecting to K logits, then softmax."""
    weight = ad.constant(weight)
    if weight.shape[1] < 2:
        raise ValueError("need at least two clusters")
    return ad.row_softmax(attention_aggregate(z, struct, weight, attn))


def augment_assignments(p) -> Tensor:
    """Sharpen assignments: square, divide by soft cluster frequency, re-softmax."""
    p = ad.constant(p)
    freq = ad.sum(p, axis=0)
    return ad.row_softmax(ad.scale_cols(p * p, ad.reciprocal(freq)))


def community_reps(p, z) -> Tensor:
    """Assignment-weighted mean embedding of every community, shape (K, d)."""
    p, z = ad.constant(p), ad.constant(z)
    if p.shape[0] != z.shape[0]:
        raise ad.ShapeError(f"community_reps: {p.shape} assignments for {z.shape} embeddings")
    return ad.scale_rows(ad.transpose(p) @ z, ad.reciprocal(ad.sum(p, axis=0)))


def loss_global(z, c0, train_ids):
    """Mean squared distance to the global centre over ``train_ids``.

    Returns ``(loss, per_node)`` where ``per_node`` covers every node.
    """
    per_node = ad.sq_norm_rows(ad.sub_row(z, c0))
    return ad.mean(ad.gather_rows(per_node, train_ids)), per_node


def loss_local(z, p, centers, train_ids):
    """Mean squared distance of each node to its most probable community centre.

    The argmax selection is a constant of the forward pass.
    """
    z = ad.constant(z)
    k_star = ad.argmax_rows(p)
    per_node = ad.sq_norm_rows(z - ad.gather_rows(centers, k_star))
    return ad.mean(ad.gather_rows(per_node, train_ids)), per_node, k_star


def _contrast(a, b) -> Tensor:
    sim = ad.cosine_matrix(a, b)
    lse = ad.log(ad.sum(ad.exp(sim), axis=1))
    return ad.mean(lse - ad.diag(sim))


def loss_cluster_regularized(c, c_plus) -> Tensor:
    """Contrast community centres with their sharpened counterparts (cosine, InfoNCE-style)."""
    c = ad.constant(c)
    if c.shape[0] < 2:
        raise ValueError("need at least two clusters")
    return _contrast(c, c_plus)


def loss_cluster_plain(p, p_plus) -> Tensor:
    """Same contrast applied to the assignment columns instead of the centres."""
    return _contrast(ad.transpose(p), ad.transpose(p_plus))


@dataclass
class LossBreakdown:
    glo: float
    loc: float
    clu: float
    total: float
    per_node_glo: np.ndarray
    per_node_loc: np.ndarray


def total_loss(glo, loc, clu, lambda_loc: float, lambda_clu: float):
    """``glo + lambda_loc * loc + lambda_clu * clu``; works for floats and tensors."""
    if lambda_loc < 0 or lambda_clu < 0:
        raise ValueError("loss weights must be non-negative")
    return glo + lambda_loc * loc + lambda_clu * clu


def anomaly_scores(z, c0, centers, p, lambda_loc: float, use_global: bool = True) -> np.ndarray:
    """Global plus weighted local squared distance for every node."""
    z = np.asarray(z)
    p = np.asarray(p)
    k_star = np.argmax(p, axis=1)
    loc = np.sum((z - np.asarray(centers)[k_star]) ** 2, axis=1)
    glo = np.sum((z - np.asarray(c0)[None, :]) ** 2, axis=1) if use_global else 0.0
    return glo + lambda_loc * loc


def derive_center(mode: str, z: np.ndarray, previous: Optional[np.ndarray] = None) -> np.ndarray:
    """Global centre for the given derivation strategy.

    ``init`` freezes the first value it sees (``previous`` when given);
    ``update`` always recomputes the mean of ``z``; ``train`` starts from the
    mean and is then owned by the optimiser, so ``previous`` wins.
    """
    if mode not in CENTER_MODES:
        raise ValueError(f"unknown center mode {mode!r}; expected one of {CENTER_MODES}")
    if mode == "update" or previous is None:
        return np.asarray(z).mean(axis=0)
    return np.asarray(previous)
