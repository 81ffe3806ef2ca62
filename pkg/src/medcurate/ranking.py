"""Rank-based evaluation metrics, Precision/F1@K curves, and cluster-balanced selection.

Metric definitions (the source material reports them without definitions;
these reconstructions are echoed into output metadata):

* ACC  — pairwise accuracy over annotated test pairs, exact score ties get 0.5.
* AUC  — Wilcoxon-Mann-Whitney statistic over positive/negative samples.
* MR   — mean normalized rank of positives, 100 * rank / n, descending scores,
         average-rank ties; lower is better.
* MAP  — average precision of the descending-score ranking, positives relevant.

All four are reported in percent and are invariant under strictly increasing
score transforms. Tie-breaking, where an explicit order is needed, is
lexicographic by sample id.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import MissingScore, NoPositives, SingleClass

METRIC_DEFINITIONS = {
    "acc": "pairwise accuracy over test pairs; exact score ties count 0.5",
    "auc": "Wilcoxon-Mann-Whitney statistic over pooled positive/negative samples (ties 0.5)",
    "mr": "mean over positives of 100*rank/n, descending scores, average-rank ties; lower is better",
    "map": "average precision of the descending-score ranking with positives relevant; ties broken by id",
}


@dataclass
class RankMetrics:
    acc: float
    auc: float
    mr: float
    map: float

    def to_json(self) -> str:
        return json.dumps(
            {"acc": self.acc, "auc": self.auc, "mr": self.mr, "map": self.map,
             "definitions": METRIC_DEFINITIONS}
        )


@dataclass
class CurvePoint:
    k_percent: float
    precision: float
    recall: float
    f1: float


@dataclass
class SelectionReport:
    curve: list[CurvePoint] = field(default_factory=list)
    critical_percentiles: list[float] = field(default_factory=list)
    selected_ids: list[str] = field(default_factory=list)
    per_cluster_counts: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "curve": [vars(p) for p in self.curve],
                "critical_percentiles": self.critical_percentiles,
                "selected_ids": self.selected_ids,
                "per_cluster_counts": {str(k): v for k, v in self.per_cluster_counts.items()},
            }
        )


def curve_to_csv(curve: list[CurvePoint]) -> str:
    lines = ["k,precision,recall,f1"]
    for p in curve:
        lines.append(f"{p.k_percent},{p.precision},{p.recall},{p.f1}")
    return "\n".join(lines) + "\n"


def pairwise_acc(scores: dict[str, float], test_pairs: list[tuple[str, str]]) -> float:
    """Fraction (percent) of pairs (preferred_id, other_id) ranked correctly;
    exact score ties count 0.5."""
    if not test_pairs:
        raise ValueError("no test pairs")
    correct = 0.0
    for preferred, other in test_pairs:
        if preferred not in scores or other not in scores:
            raise MissingScore(f"pair ({preferred}, {other}) not fully scored")
        if scores[preferred] > scores[other]:
            correct += 1.0
        elif scores[preferred] == scores[other]:
            correct += 0.5
    return 100.0 * correct / len(test_pairs)


def _split_classes(scores: dict[str, float], labels: dict[str, str]):
    pos = [scores[i] for i in scores if labels.get(i) == "positive"]
    neg = [scores[i] for i in scores if labels.get(i) == "negative"]
    if not pos or not neg:
        raise SingleClass("need both positive and negative samples")
    return np.asarray(pos), np.asarray(neg)


def auc(scores: dict[str, float], labels: dict[str, str]) -> float:
    """WMW AUC in percent, computed via rank sums (equivalent to the O(n^2)
    pairwise count with half credit for ties)."""
    pos, neg = _split_classes(scores, labels)
    pooled = np.concatenate([pos, neg])
    ranks = rankdata(pooled)  # average ranks for ties
    rank_sum = ranks[: len(pos)].sum()
    u = rank_sum - len(pos) * (len(pos) + 1) / 2.0
    return 100.0 * u / (len(pos) * len(neg))


def mean_rank(scores: dict[str, float], labels: dict[str, str]) -> float:
    """Mean over positives of 100*rank/n with descending scores and
    average-rank ties. ~50 for random labels, below 50 for a good model."""
    _split_classes(scores, labels)  # raises SingleClass if degenerate
    ids = list(scores)
    vals = np.asarray([scores[i] for i in ids])
    ranks = rankdata(-vals)  # rank 1 = highest score
    n = len(ids)
    pos_ranks = [r for i, r in zip(ids, ranks) if labels.get(i) == "positive"]
    return 100.0 * float(np.mean(pos_ranks)) / n


def mean_average_precision(scores: dict[str, float], labels: dict[str, str]) -> float:
    """Average precision (percent) of the descending-score ranking; ties
    broken lexicographically by sample id."""
    ids = sorted(scores, key=lambda i: (-scores[i], i))
    rel = [labels.get(i) == "positive" for i in ids]
    n_pos = sum(rel)
    if n_pos == 0:
        raise NoPositives("no positive samples")
    hits = 0
    ap = 0.0
    for rank, r in enumerate(rel, start=1):
        if r:
            hits += 1
            ap += hits / rank
    return 100.0 * ap / n_pos


def pk_f1_curve(scores: dict[str, float], labels: dict[str, str],
                grid=None) -> list[CurvePoint]:
    """Precision/recall/F1 of taking the top ceil(k*n/100) samples by score
    (ties by id) at each percentile k in the grid."""
    if grid is None:
        grid = list(range(1, 101))
    ids = sorted(scores, key=lambda i: (-scores[i], i))
    n = len(ids)
    n_pos = sum(1 for i in ids if labels.get(i) == "positive")
    points = []
    for k in grid:
        if not 0 < k <= 100:
            raise ValueError(f"percentile {k} outside (0, 100]")
        top = ids[: math.ceil(k * n / 100.0)]
        tp = sum(1 for i in top if labels.get(i) == "positive")
        precision = tp / len(top) if top else 0.0
        recall = tp / n_pos if n_pos else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        points.append(CurvePoint(k_percent=float(k), precision=precision, recall=recall, f1=f1))
    return points


def detect_critical(curve: list[CurvePoint], plateau_eps: float = 0.002,
                    plateau_window: int = 3) -> list[float]:
    """Percentiles where F1 reaches a local peak or starts a plateau.

    A plateau start is the first point from which the absolute forward F1
    difference stays below plateau_eps for plateau_window consecutive steps.
    Falls back to the final grid point when nothing else qualifies.
    """
    f1 = [p.f1 for p in curve]
    ks = [p.k_percent for p in curve]
    m = len(curve)
    found = set()
    for i in range(1, m - 1):
        if f1[i] >= f1[i - 1] and f1[i] >= f1[i + 1] and (f1[i] > f1[i - 1] or f1[i] > f1[i + 1]):
            found.add(ks[i])
    i = 0
    while i + plateau_window < m:
        if all(abs(f1[i + j + 1] - f1[i + j]) < plateau_eps for j in range(plateau_window)):
            found.add(ks[i])
            # skip to the end of this flat run
            while i + 1 < m and abs(f1[i + 1] - f1[i]) < plateau_eps:
                i += 1
        i += 1
    if not found and m:
        found.add(ks[-1])
    return sorted(found)


def select_balanced(scores: dict[str, float], cluster_assignments: dict[str, int],
                    p: float) -> SelectionReport:
    """Per cluster with N_c members, select the top round(p*N_c/100) by score
    (ties by id); the union is the selection."""
    missing = [i for i in scores if i not in cluster_assignments]
    if missing:
        raise ValueError(f"unclustered scored ids: {missing[:5]}")
    clusters: dict[int, list[str]] = {}
    for i in scores:
        clusters.setdefault(cluster_assignments[i], []).append(i)
    selected = []
    counts = {}
    for c in sorted(clusters):
        members = sorted(clusters[c], key=lambda i: (-scores[i], i))
        quota = round(p * len(members) / 100.0)
        take = members[:quota]
        selected.extend(take)
        counts[c] = len(take)
    return SelectionReport(selected_ids=selected, per_cluster_counts=counts)


def rank_metrics(scores: dict[str, float], labels: dict[str, str],
                 test_pairs: list[tuple[str, str]] | None = None) -> RankMetrics:
    """Bundle of all four rank metrics; ACC requires annotated test pairs and
    falls back to AUC-style pooled pairs when none are given."""
    if test_pairs is None:
        pos = [i for i in scores if labels.get(i) == "positive"]
        neg = [i for i in scores if labels.get(i) == "negative"]
        test_pairs = [(p, q) for p in pos for q in neg]
    return RankMetrics(
        acc=pairwise_acc(scores, test_pairs),
        auc=auc(scores, labels),
        mr=mean_rank(scores, labels),
        map=mean_average_precision(scores, labels),
    )
