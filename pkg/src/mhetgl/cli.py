"""Command-line front end: one subcommand per pipeline stage.

Every stage writes its outputs plus a ``manifest.json`` (stage name, sha256 of
the inputs, config hash, output paths, wall time) into ``--out-dir``. The
worker count for preprocessing comes from the ``MHETGL_WORKERS`` environment
variable only.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import time
from pathlib import Path
from typing import Dict, Iterable, List, Optional

import numpy as np

from .graph import GraphFormatError, NodeSplits, load_graph, read_labels, save_graph, split_nodes
from .injection import inject_contextual, inject_mixed, inject_structural
from .metrics import evaluate_scores
from .refine import edge_tags, gdv_edge_similarity, load_topology, refine_topology, save_topology
from .trainer import TrainConfig, checkpoint_load, checkpoint_save, score_nodes, train

logger = logging.getLogger("mhetgl")


class StageError(RuntimeError):
    """An upstream artifact is missing or inconsistent."""


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _hash_inputs(paths: Iterable) -> Dict[str, str]:
    out = {}
    for p in paths:
        p = Path(p)
        if p.is_dir():
            for f in sorted(q for q in p.rglob("*") if q.is_file() and q.name != "manifest.json"):
                out[str(f)] = sha256_file(f)
        else:
            out[str(p)] = sha256_file(p)
    return out


def write_manifest(out_dir: Path, stage: str, inputs: Iterable, config: Optional[TrainConfig],
                   outputs: List[Path], started: float, extra: Optional[dict] = None) -> Path:
    missing = [str(p) for p in outputs if not Path(p).exists()]
    if missing:
        raise StageError(f"{stage}: declared outputs were not written: {missing}")
    manifest = {
        "stage": stage,
        "inputs": _hash_inputs(inputs),
        "config_hash": config.hash() if config is not None else None,
        "outputs": [str(p) for p in outputs],
        "wall_time_s": round(time.perf_counter() - started, 3),
    }
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return path


def _config(args) -> TrainConfig:
    base = TrainConfig.from_json(args.config).to_dict() if args.config else TrainConfig().to_dict()
    if args.seed is not None:
        base["seed"] = args.seed
    return TrainConfig.from_dict(base)


def _require(path, stage: str, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise StageError(f"{what} {p} not found; run the `{stage}` stage first")
    return p


def _load(args):
    labels = getattr(args, "labels", None)
    return load_graph(args.edges, args.attrs, labels)


def _topology(graph, path):
    _require(Path(path) / "a_pur.csv", "preprocess", "topology cache")
    return load_topology(graph, path)


def write_scores(path, scores: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id", "score"])
        for i, s in enumerate(scores):
            w.writerow([i, repr(float(s))])


def read_scores(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["node_id", "score"]:
            raise GraphFormatError(f"{path}: expected header node_id,score")
        rows = [(int(i), float(s)) for i, s in reader]
    ids = [i for i, _ in rows]
    if ids != list(range(len(ids))):
        raise GraphFormatError(f"{path}: node ids must be 0..N-1 in order")
    return np.array([s for _, s in rows])


# ---- stages --------------------------------------------------------------

def cmd_preprocess(args, out: Path, t0: float) -> int:
    cfg = _config(args)
    tau = cfg.tau if args.tau is None else args.tau
    size = cfg.max_graphlet_size if args.max_graphlet_size is None else args.max_graphlet_size
    delta = cfg.delta if args.delta is None else args.delta
    graph = _load(args)
    topo = refine_topology(graph, tau=tau, max_size=size, delta=delta)
    paths = save_topology(topo, graph, out)
    write_manifest(out, "preprocess", [args.edges, args.attrs], cfg, [Path(p) for p in paths.values()],
                   t0, {"tau": tau, "max_graphlet_size": size, "delta": delta})
    print(f"wrote {len(paths)} topology files to {out}")
    return 0


def cmd_inject(args, out: Path, t0: float) -> int:
    cfg = _config(args)
    seed = cfg.seed
    graph = _load(args)
    if args.kind == "structural":
        g, labels, groups = inject_structural(graph, args.clique_size, args.count, seed)
        record = {"kind": "structural", "clique_size": args.clique_size, "groups": groups}
    elif args.kind == "contextual":
        g, labels, sources = inject_contextual(graph, args.count, args.pool_size, seed)
        record = {"kind": "contextual", "pool_size": args.pool_size,
                  "sources": {str(k): v for k, v in sorted(sources.items())}}
    else:
        g, labels, record = inject_mixed(graph, args.rate, args.clique_size, args.pool_size, seed)
        record = dict(record, kind="mixed")
    record["seed"] = seed
    paths = [out / "edges.txt", out / "attrs.csv", out / "labels.txt", out / "injection.json"]
    save_graph(g, *paths[:3])
    with open(paths[3], "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
    inputs = [args.edges, args.attrs] + ([args.labels] if args.labels else [])
    write_manifest(out, "inject", inputs, cfg, paths, t0)
    print(f"injected {int(labels.sum())} anomalies into {g.num_nodes} nodes")
    return 0


def cmd_train(args, out: Path, t0: float) -> int:
    cfg = _config(args)
    graph = _load(args)
    topo = _topology(graph, args.topology)
    splits = split_nodes(graph, cfg.split_ratios, cfg.seed)
    result = train(graph, topo, splits, cfg)
    ckpt = checkpoint_save(out / "checkpoint", result.params, result.center, cfg,
                           result.best_epoch, graph.num_features)
    result.history.write_csv(out / "history.csv")
    with open(out / "splits.json", "w") as fh:
        json.dump(splits.to_dict(), fh)
    outputs = [ckpt / "manifest.json", ckpt / "tensors.bin", out / "history.csv", out / "splits.json"]
    inputs = [args.edges, args.attrs, args.topology] + ([args.labels] if args.labels else [])
    write_manifest(out, "train", inputs, cfg, outputs, t0,
                   {"best_epoch": result.best_epoch, "epochs_run": len(result.history),
                    "stopping_mode": result.history.stopping_mode})
    print(f"trained {len(result.history)} epochs, best epoch {result.best_epoch}")
    return 0


def cmd_score(args, out: Path, t0: float) -> int:
    graph = _load(args)
    topo = _topology(graph, args.topology)
    ckpt = _require(Path(args.checkpoint) / "manifest.json", "train", "checkpoint")
    params, center, cfg, _ = checkpoint_load(ckpt.parent, in_dim=graph.num_features)
    scores = score_nodes(graph, topo, params, center, cfg)
    outputs = [out / "scores.csv"]
    write_scores(outputs[0], scores)
    if args.top is not None:
        if args.top < 1:
            raise ValueError("--top must be positive")
        order = np.lexsort((np.arange(len(scores)), -scores))[: args.top]
        outputs.append(out / "top.txt")
        with open(outputs[-1], "w") as fh:
            fh.writelines(f"{int(i)}\n" for i in order)
    write_manifest(out, "score", [args.edges, args.attrs, args.topology, args.checkpoint], cfg,
                   outputs, t0)
    print(f"scored {len(scores)} nodes")
    return 0


def cmd_eval(args, out: Path, t0: float) -> int:
    scores = read_scores(_require(args.scores, "score", "score file"))
    labels = read_labels(args.labels, len(scores))
    ids = np.arange(len(scores))
    if args.splits:
        with open(_require(args.splits, "train", "split file")) as fh:
            ids = getattr(NodeSplits.from_dict(json.load(fh)), f"{args.subset}_ids")
    report = evaluate_scores(scores[ids], labels[ids])
    path = out / "metrics.json"
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
    inputs = [args.scores, args.labels] + ([args.splits] if args.splits else [])
    write_manifest(out, "eval", inputs, None, [path], t0)
    print(json.dumps(report.to_dict(), sort_keys=True))
    return 0


def cmd_distributions(args, out: Path, t0: float) -> int:
    graph = _load(args)
    topo = _topology(graph, args.topology)
    tags = edge_tags(graph, graph.labels)
    sim = gdv_edge_similarity(graph, topo.gdv)
    paths = [out / "kappa_dist.csv", out / "gdv_sim_dist.csv"]
    for path, name, values in zip(paths, ("kappa", "similarity"), (topo.kappa, sim)):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["src", "dst", "tag", name])
            for (u, v), t, x in zip(graph.edges, tags, values):
                w.writerow([int(u), int(v), t, repr(float(x))])
    summary = {}
    for name, values in (("kappa", topo.kappa), ("similarity", sim)):
        summary[name] = {t: float(np.mean(values[tags == t])) if np.any(tags == t) else None
                         for t in ("aa", "an", "nn")}
    write_manifest(out, "distributions", [args.edges, args.attrs, args.labels, args.topology], None,
                   paths, t0, {"means": summary})
    print(json.dumps(summary, sort_keys=True))
    return 0


# ---- parser --------------------------------------------------------------

def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=argparse.SUPPRESS, help="JSON file with TrainConfig fields")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="overrides the config seed")
    p.add_argument("--out-dir", default=argparse.SUPPRESS, help="stage output directory")
    return p


def _graph_args(p, labels: str = "optional"):
    p.add_argument("--edges", required=True, help="edge list, two ids per line")
    p.add_argument("--attrs", required=True, help="attribute CSV, one row per node")
    if labels == "required":
        p.add_argument("--labels", required=True, help="0/1 label file")
    else:
        p.add_argument("--labels", default=None, help="0/1 label file")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="mhetgl", parents=[common],
                                     description="Graph anomaly detection pipeline stages.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", parents=[common], help="curvature, GDV and refined adjacencies")
    _graph_args(p)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--max-graphlet-size", type=int, default=None, choices=(3, 4))
    p.add_argument("--delta", type=float, default=None)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("inject", parents=[common], help="inject structural/contextual anomalies")
    _graph_args(p)
    p.add_argument("--kind", choices=("structural", "contextual", "mixed"), default="mixed")
    p.add_argument("--clique-size", type=int, default=15)
    p.add_argument("--count", type=int, default=1, help="cliques or contextual nodes")
    p.add_argument("--pool-size", type=int, default=50)
    p.add_argument("--rate", type=float, default=0.05, help="anomaly rate for --kind mixed")
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("train", parents=[common], help="train the model on a preprocessed graph")
    _graph_args(p)
    p.add_argument("--topology", required=True, help="preprocess output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", parents=[common], help="write node_id,score for every node")
    _graph_args(p)
    p.add_argument("--topology", required=True)
    p.add_argument("--checkpoint", required=True, help="checkpoint directory from train")
    p.add_argument("--top", type=int, default=None, help="also write the n highest-scoring ids")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", parents=[common], help="AUROC/AUPR of a score file")
    p.add_argument("--scores", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--splits", default=None, help="splits.json from train to restrict the node set")
    p.add_argument("--subset", choices=("train", "val", "test"), default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("distributions", parents=[common], help="per-edge kappa and GDV similarity dumps")
    _graph_args(p, labels="required")
    p.add_argument("--topology", required=True)
    p.set_defaults(func=cmd_distributions)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    for name in ("config", "seed", "out_dir"):
        if not hasattr(args, name):
            setattr(args, name, None)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    try:
        return args.func(args, out, time.perf_counter())
    except (StageError, GraphFormatError, FileNotFoundError, ValueError, FloatingPointError) as exc:
        print(f"mhetgl {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
