"""Ranking metrics for anomaly scores."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata


@dataclass(frozen=True)
class MetricReport:
    auroc: float
    aupr: float
    num_pos: int
    num_neg: int

    def to_dict(self) -> dict:
        return asdict(self)


def _validate(scores, labels):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError(f"scores {s.shape} and labels {y.shape} must be equal-length vectors")
    if not np.all(np.isin(y, (0, 1))):
        raise ValueError("labels must be 0/1")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    return s, y.astype(np.int64)


def auroc(scores, labels) -> float:
    """Probability that a random positive outscores a random negative (ties count 1/2)."""
    s, y = _validate(scores, labels)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC needs at least one positive and one negative")
    ranks = rankdata(s)
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def aupr(scores, labels) -> float:
    """Average precision over positives in descending score order (ties by index)."""
    s, y = _validate(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise ValueError("AUPR needs at least one positive")
    order = np.lexsort((np.arange(len(s)), -s))
    hits = np.cumsum(y[order])
    ranks = np.arange(1, len(s) + 1)
    pos = y[order] == 1
    return math.fsum(hits[pos] / ranks[pos]) / n_pos


def evaluate_scores(scores, labels) -> MetricReport:
    s, y = _validate(scores, labels)
    n_pos = int(y.sum())
    return MetricReport(auroc(s, y), aupr(s, y), n_pos, len(y) - n_pos)
