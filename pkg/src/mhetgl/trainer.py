"""End-to-end training: forward pass, Adam, early stopping and checkpoints."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoder import BranchStructure, branch_structure, encode, glorot, init_encoder_params, plain_structure
from .graph import AttributedGraph, NodeSplits
from .metrics import auroc
from .mhl import (
    CENTER_MODES,
    anomaly_scores,
    assign,
    augment_assignments,
    community_reps,
    loss_cluster_plain,
    loss_cluster_regularized,
    loss_global,
    loss_local,
)
from .refine import RefinedTopology

logger = logging.getLogger(__name__)

VARIANTS = ("full", "loc_only", "glo_only", "no_reg", "pur_only", "aug_only", "neg_weights")
STOPPING_MODES = ("val_auroc", "train_loss")
CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    lambda_loc: float = 1.0
    lambda_clu: float = 1.0
    num_clusters: int = 4
    center_mode: str = "init"
    hidden_dim: int = 32
    num_layers: int = 2
    tau: float = 0.5
    delta: float = 1.0
    max_graphlet_size: int = 4
    learning_rate: float = 0.001
    weight_decay: float = 0.0005
    max_epochs: int = 10000
    patience: int = 1000
    seed: int = 0
    split_ratios: Tuple[float, float, float] = (6.0, 1.0, 3.0)
    variant: str = "full"
    stopping_mode: str = "val_auroc"

    def __post_init__(self):
        self.split_ratios = tuple(float(r) for r in self.split_ratios)
        self.validate()

    def validate(self):
        if self.lambda_loc < 0 or self.lambda_clu < 0:
            raise ValueError("loss weights must be non-negative")
        if self.num_clusters < 2:
            raise ValueError("num_clusters must be at least 2")
        if self.center_mode not in CENTER_MODES:
            raise ValueError(f"center_mode must be one of {CENTER_MODES}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.stopping_mode not in STOPPING_MODES:
            raise ValueError(f"stopping_mode must be one of {STOPPING_MODES}")
        if self.num_layers < 1 or self.hidden_dim < 1:
            raise ValueError("num_layers and hidden_dim must be positive")
        if self.max_epochs < 1 or not 0 < self.patience <= self.max_epochs:
            raise ValueError("need 0 < patience <= max_epochs")
        if len(self.split_ratios) != 3:
            raise ValueError("split_ratios needs three entries")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["split_ratios"] = list(self.split_ratios)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


# ---- model ---------------------------------------------------------------

@dataclass
class ModelInputs:
    x: np.ndarray
    structures: Dict[str, BranchStructure]
    original: BranchStructure
    train_ids: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.x.shape[0]


def build_inputs(graph: AttributedGraph, topology: RefinedTopology, train_ids,
                 variant: str = "full") -> ModelInputs:
    if variant == "neg_weights":
        pur = branch_structure(topology.a_pur, weights=topology.raw_pur)
    else:
        pur = branch_structure(topology.a_pur)
    structures = {"pur": pur, "aug": branch_structure(topology.a_aug)}
    return ModelInputs(graph.attributes, structures, plain_structure(graph.adjacency()),
                       np.asarray(train_ids, dtype=np.int64))


def init_params(config: TrainConfig, in_dim: int) -> Dict[str, np.ndarray]:
    """Initial parameters from a Philox stream keyed by ``config.seed``."""
    rng = np.random.Generator(np.random.Philox(config.seed))
    params = init_encoder_params(rng, in_dim, config.hidden_dim, config.num_layers)
    params["assign.weight"] = glorot(rng, config.hidden_dim, config.num_clusters)
    params["assign.attn"] = rng.uniform(-0.1, 0.1, size=2 * config.num_clusters)
    return params


def expected_shapes(config: TrainConfig, in_dim: int) -> Dict[str, tuple]:
    d, k = config.hidden_dim, config.num_clusters
    shapes = {}
    for l in range(config.num_layers):
        d_in = in_dim if l == 0 else d
        for b in ("pur", "aug"):
            shapes[f"layer{l}.{b}.gamma"] = ()
            shapes[f"layer{l}.{b}.weight"] = (d_in, d)
            shapes[f"layer{l}.{b}.attn"] = (2 * d,)
        shapes[f"layer{l}.fuse.weight"] = (2 * d, d)
        shapes[f"layer{l}.fuse.bias"] = (d,)
    shapes["assign.weight"] = (d, k)
    shapes["assign.attn"] = (2 * k,)
    if config.center_mode == "train":
        shapes["center"] = (d,)
    return shapes


def forward(params: Mapping[str, Tensor], inputs: ModelInputs, config: TrainConfig,
            center=None) -> Dict[str, object]:
    """One full-graph pass: embeddings, assignments, centres and the loss terms.

    ``center`` is the global centre for ``init``/``update`` modes (``update``
    ignores it and uses the current mean embedding); in ``train`` mode the
    ``"center"`` parameter is used.
    """
    z = encode(inputs.x, inputs.structures, params, config.num_layers, config.variant)
    if config.center_mode == "train":
        c0 = params["center"]
    elif config.center_mode == "update":
        c0 = ad.constant(z.data.mean(axis=0))
    else:
        c0 = ad.constant(center)
    p = assign(z, inputs.original, params["assign.weight"], params["assign.attn"])
    p_plus = augment_assignments(p)
    c = community_reps(p, z)
    c_plus = community_reps(p_plus, z)
    glo, per_glo = loss_global(z, c0, inputs.train_ids)
    loc, per_loc, k_star = loss_local(z, p, c, inputs.train_ids)
    if config.variant == "no_reg":
        clu = loss_cluster_plain(p, p_plus)
    else:
        clu = loss_cluster_regularized(c, c_plus)
    if config.variant == "loc_only":
        total = config.lambda_loc * loc + config.lambda_clu * clu
    elif config.variant == "glo_only":
        total = glo + config.lambda_clu * clu
    else:
        total = glo + config.lambda_loc * loc + config.lambda_clu * clu
    return {"z": z, "c0": c0, "p": p, "p_plus": p_plus, "c": c, "c_plus": c_plus,
            "glo": glo, "loc": loc, "clu": clu, "total": total,
            "per_glo": per_glo, "per_loc": per_loc, "k_star": k_star}


def scores_from_forward(out: Mapping, config: TrainConfig) -> np.ndarray:
    z, c0, c, p = out["z"].data, out["c0"].data, out["c"].data, out["p"].data
    if config.variant == "loc_only":
        return anomaly_scores(z, c0, c, p, 1.0, use_global=False)
    lam = 0.0 if config.variant == "glo_only" else config.lambda_loc
    return anomaly_scores(z, c0, c, p, lam)


def initial_center(params: Mapping[str, np.ndarray], inputs: ModelInputs,
                   config: TrainConfig) -> np.ndarray:
    bound = {k: Tensor(v) for k, v in params.items()}
    z = encode(inputs.x, inputs.structures, bound, config.num_layers, config.variant)
    return z.data.mean(axis=0)


# ---- optimiser -----------------------------------------------------------

@dataclass
class AdamState:
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], state: AdamState,
              lr: float = 0.001, weight_decay: float = 0.0, betas=(0.9, 0.999), eps: float = 1e-8):
    """Bias-corrected Adam with L2 weight decay folded into the gradient.

    Returns ``(new_params, new_state)``; inputs are not modified.
    """
    b1, b2 = betas
    t = state.step + 1
    new_params, m_new, v_new = {}, {}, {}
    for name, theta in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != np.shape(theta):
            raise ValueError(f"gradient shape {g.shape} != parameter shape {np.shape(theta)} for {name}")
        g = g + weight_decay * theta
        m = b1 * state.m.get(name, np.zeros_like(g)) + (1 - b1) * g
        v = b2 * state.v.get(name, np.zeros_like(g)) + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        new_params[name] = theta - lr * m_hat / (np.sqrt(v_hat) + eps)
        m_new[name], v_new[name] = m, v
    return new_params, AdamState(t, m_new, v_new)


# ---- training loop -------------------------------------------------------

@dataclass
class EpochRecord:
    epoch: int
    glo: float
    loc: float
    clu: float
    total: float
    val_metric: float


@dataclass
class TrainHistory:
    records: List[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    stopping_mode: str = "val_auroc"

    def __len__(self):
        return len(self.records)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "glo", "loc", "clu", "total", "val_metric"])
            for r in self.records:
                w.writerow([r.epoch, repr(r.glo), repr(r.loc), repr(r.clu), repr(r.total),
                            repr(r.val_metric)])


@dataclass
class TrainResult:
    params: Dict[str, np.ndarray]
    center: np.ndarray
    history: TrainHistory
    config: TrainConfig

    @property
    def best_epoch(self) -> int:
        return self.history.best_epoch


def _stopping_mode(config: TrainConfig, graph: AttributedGraph, splits: NodeSplits) -> str:
    if config.stopping_mode == "train_loss":
        return "train_loss"
    if graph.labels is None:
        raise ValueError("stopping_mode 'val_auroc' needs labels for the validation nodes")
    y = graph.labels[splits.val_ids]
    if len(y) == 0 or y.min() == y.max():
        logger.warning("validation split holds a single class; early stopping falls back to train_loss")
        return "train_loss"
    return "val_auroc"


def train(graph: AttributedGraph, topology: RefinedTopology, splits: NodeSplits,
          config: TrainConfig) -> TrainResult:
    """Full-batch training with early stopping; returns the best epoch's parameters."""
    mode = _stopping_mode(config, graph, splits)
    inputs = build_inputs(graph, topology, splits.train_ids, config.variant)
    params = init_params(config, graph.num_features)
    center = initial_center(params, inputs, config)
    if config.center_mode == "train":
        params["center"] = center.copy()
    names = list(params)
    state = AdamState()
    history = TrainHistory(stopping_mode=mode)
    best_metric = -np.inf
    best = None

    for epoch in range(config.max_epochs):
        bound = {k: Tensor(v, name=k) for k, v in params.items()}
        out = forward(bound, inputs, config, center)
        total = out["total"].item()
        if not np.isfinite(total):
            raise FloatingPointError(f"non-finite loss at epoch {epoch}")
        grads = dict(zip(names, ad.backprop(out["total"], [bound[k] for k in names])))
        if mode == "val_auroc":
            scores = scores_from_forward(out, config)
            metric = auroc(scores[splits.val_ids], graph.labels[splits.val_ids])
            improved = metric > best_metric
        else:
            metric = total
            improved = -total > best_metric
        history.records.append(EpochRecord(epoch, out["glo"].item(), out["loc"].item(),
                                           out["clu"].item(), total, float(metric)))
        if improved:
            best_metric = metric if mode == "val_auroc" else -total
            best = (epoch, {k: v.copy() for k, v in params.items()}, out["c0"].data.copy())
        elif epoch - best[0] >= config.patience:
            logger.info("early stop at epoch %d (best %d)", epoch, best[0])
            break
        params, state = adam_step(params, grads, state, config.learning_rate, config.weight_decay)

    history.best_epoch = best[0]
    return TrainResult(best[1], best[2], history, config)


def evaluate_model(graph: AttributedGraph, topology: RefinedTopology, params: Mapping[str, np.ndarray],
                   center: np.ndarray, config: TrainConfig, train_ids=None) -> Dict[str, object]:
    """Forward pass with fixed parameters; adds ``scores`` to the output dict."""
    ids = np.arange(graph.num_nodes) if train_ids is None else train_ids
    inputs = build_inputs(graph, topology, ids, config.variant)
    bound = {k: Tensor(v, name=k) for k, v in params.items()}
    out = forward(bound, inputs, config, center)
    out["scores"] = scores_from_forward(out, config)
    return out


def score_nodes(graph, topology, params, center, config) -> np.ndarray:
    return evaluate_model(graph, topology, params, center, config)["scores"]


# ---- checkpoints ---------------------------------------------------------

def checkpoint_save(path, params: Mapping[str, np.ndarray], center: np.ndarray, config: TrainConfig,
                    epoch: int = -1, in_dim: Optional[int] = None) -> Path:
    """Write ``manifest.json`` plus ``tensors.bin`` (little-endian float64) into ``path``."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    tensors = dict(params)
    tensors["global_center"] = np.asarray(center)
    entries, offset = [], 0
    with open(out / "tensors.bin", "wb") as fh:
        for name in sorted(tensors):
            arr = np.asarray(tensors[name], dtype="<f8")
            fh.write(arr.tobytes(order="C"))
            entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": arr.size})
            offset += arr.size
    manifest = {
        "format": "mhetgl-checkpoint",
        "version": CHECKPOINT_VERSION,
        "epoch": int(epoch),
        "in_dim": in_dim,
        "config": config.to_dict(),
        "config_hash": config.hash(),
        "tensors": entries,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return out


def checkpoint_load(path, config: Optional[TrainConfig] = None, in_dim: Optional[int] = None):
    """Read a checkpoint; returns ``(params, center, config, manifest)``.

    When ``config`` / ``in_dim`` are given, every tensor shape is checked
    against what that configuration expects.
    """
    src = Path(path)
    with open(src / "manifest.json") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != "mhetgl-checkpoint" or manifest.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint format/version in {src}")
    saved_config = TrainConfig.from_dict(manifest["config"])
    flat = np.fromfile(src / "tensors.bin", dtype="<f8")
    tensors = {}
    for e in manifest["tensors"]:
        chunk = flat[e["offset"] : e["offset"] + e["count"]]
        if len(chunk) != e["count"]:
            raise ValueError(f"checkpoint data truncated at tensor {e['name']}")
        tensors[e["name"]] = chunk.reshape(e["shape"]).astype(np.float64)
    center = tensors.pop("global_center")
    check_config = config or saved_config
    dim = in_dim if in_dim is not None else manifest.get("in_dim")
    if dim is not None:
        expected = expected_shapes(check_config, dim)
        if set(expected) != set(tensors):
            raise ValueError(f"checkpoint tensors {sorted(tensors)} do not match configuration")
        for name, shape in expected.items():
            if tensors[name].shape != shape:
                raise ValueError(f"shape mismatch for {name}: checkpoint {tensors[name].shape}, expected {shape}")
        if center.shape != (check_config.hidden_dim,):
            raise ValueError(f"shape mismatch for global center: {center.shape}")
    return tensors, center, saved_config, manifest
