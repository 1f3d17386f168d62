"""Unsupervised node anomaly detection on heterophilic attributed graphs.

The pipeline refines each neighbourhood once (curvature-purified and
graphlet-augmented adjacencies), encodes nodes with a two-branch graph
encoder, and trains it against a global plus community-level hypersphere
objective with a regularized clustering term. Everything is numpy/scipy;
gradients come from the small reverse-mode engine in :mod:`mhetgl.autodiff`.
"""

from .curvature import (
    SparseDistribution,
    curvatures,
    edge_curvature,
    hop_distances,
    neighbor_distribution,
    purified_adjacency,
    wasserstein,
)
from .encoder import attention_aggregate, encode, hge_layer, structural_aggregate
from .graph import (
    AttributedGraph,
    GraphFormatError,
    NodeSplits,
    heterophily_ratio,
    load_graph,
    save_graph,
    split_nodes,
)
from .graphlets import GdvMatrix, gdv
from .injection import (
    InjectionSpec,
    inject_contextual,
    inject_mixed,
    inject_structural,
    sbm_fixture,
    synth_graph,
)
from .metrics import MetricReport, aupr, auroc, evaluate_scores
from .mhl import (
    LossBreakdown,
    anomaly_scores,
    assign,
    augment_assignments,
    community_reps,
    derive_center,
    loss_cluster_plain,
    loss_cluster_regularized,
    loss_global,
    loss_local,
    total_loss,
)
from .refine import (
    RefinedTopology,
    augmented_adjacency,
    edge_tags,
    gdv_edge_similarity,
    load_topology,
    refine_topology,
    save_topology,
)
from .trainer import (
    VARIANTS,
    TrainConfig,
    TrainHistory,
    TrainResult,
    adam_step,
    checkpoint_load,
    checkpoint_save,
    score_nodes,
    train,
)
from .transport import TransportError, transport_plan

__version__ = "0.1.0"

__all__ = [
    "AttributedGraph", "GraphFormatError", "NodeSplits", "load_graph", "save_graph", "split_nodes",
    "heterophily_ratio", "SparseDistribution", "neighbor_distribution", "hop_distances",
    "wasserstein", "edge_curvature", "curvatures", "purified_adjacency", "GdvMatrix", "gdv",
    "augmented_adjacency", "RefinedTopology", "refine_topology", "save_topology", "load_topology",
    "edge_tags", "gdv_edge_similarity", "VARIANTS",
    "structural_aggregate", "attention_aggregate", "hge_layer", "encode", "assign",
    "augment_assignments", "community_reps", "loss_global", "loss_local",
    "loss_cluster_regularized", "loss_cluster_plain", "LossBreakdown", "total_loss",
    "anomaly_scores", "derive_center", "TrainConfig", "TrainHistory", "TrainResult", "train",
    "adam_step", "score_nodes", "checkpoint_save", "checkpoint_load", "MetricReport", "auroc",
    "aupr", "evaluate_scores", "InjectionSpec", "inject_structural", "inject_contextual",
    "inject_mixed", "synth_graph", "sbm_fixture", "transport_plan", "TransportError",
]
