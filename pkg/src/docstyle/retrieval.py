"""Exact nearest-neighbor retrieval and ranking metrics.

Distances are plain Euclidean, accumulated in float64 as an explicit
sum of squared differences (no expanded-dot-product shortcut), so the
self-distance is exactly zero and rankings never suffer cancellation noise.
Distance ties break by ascending item id (lexicographic).

Average precision of a ranking is sum_k P(k) * rel(k) / denom. Two
denominator conventions are supported and always reported by name:

* truncated (default): denom = number of relevant items inside the
  returned top-k, so a ranking that retrieves its relevant mass early
  scores 1.0 regardless of what lies beyond the cutoff;
* strict: denom = total number of relevant items in the index, which
  penalizes any relevant item left outside the top-k.

A query with denom 0 scores 0.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .featio import FeatureMatrix

AP_MODES = ("truncated", "strict")


@dataclass
class Index:
    """Searchable copy of a feature matrix with precomputed id tie-ranks."""
    features: np.ndarray      # (N, D) float64
    ids: list
    labels: np.ndarray
    id_rank: np.ndarray = field(init=False)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels)
        if len(self.ids) != len(set(self.ids)):
            raise ValueError("index ids must be unique")
        order = sorted(range(len(self.ids)), key=lambda i: self.ids[i])
        self.id_rank = np.empty(len(self.ids), dtype=np.int64)
        for rank, i in enumerate(order):
            self.id_rank[i] = rank

    @classmethod
    def from_features(cls, fm: FeatureMatrix) -> "Index":
        return cls(fm.features, list(fm.ids), fm.labels)

    @property
    def n(self) -> int:
        return self.features.shape[0]


@dataclass
class RankedItem:
    item_id: str
    distance: float
    relevant: bool


@dataclass
class Ranking:
    query_id: str
    items: list               # RankedItem, ascending distance
    n_relevant_in_index: int  # 0 when the query carried no label


def _distances(index: Index, query: np.ndarray) -> np.ndarray:
    diff = index.features - np.asarray(query, dtype=np.float64)[None, :]
    return np.sqrt(np.sum(diff * diff, axis=1))


def knn(index: Index, query: np.ndarray, k: int, query_id: str = "",
        query_label: int | None = None) -> Ranking:
    """Top-k exact Euclidean neighbors; k beyond the index size clamps."""
    if k < 1:
        raise ValueError("k must be positive")
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (index.features.shape[1],):
        raise ValueError(
            f"query dim {query.shape} does not match index dim {index.features.shape[1]}")
    dist = _distances(index, query)
    order = np.lexsort((index.id_rank, dist))[:min(k, index.n)]
    labeled = query_label is not None and query_label >= 0
    items = [RankedItem(index.ids[i], float(dist[i]),
                        bool(labeled and index.labels[i] == query_label))
             for i in order]
    n_rel = int(np.sum(index.labels == query_label)) if labeled else 0
    return Ranking(query_id, items, n_rel)


def average_precision(ranking: Ranking, mode: str = "truncated") -> float:
    """AP over the ranking's own length; see the module docstring for the
    two denominator conventions."""
    if mode not in AP_MODES:
        raise ValueError(f"mode must be one of {AP_MODES}")
    rel = np.array([item.relevant for item in ranking.items], dtype=np.float64)
    if len(rel) == 0:
        return 0.0
    hits = np.cumsum(rel)
    precision = hits / np.arange(1, len(rel) + 1)
    numerator = float(np.sum(precision * rel))
    denom = float(hits[-1]) if mode == "truncated" else float(ranking.n_relevant_in_index)
    return numerator / denom if denom > 0 else 0.0


def rank_queries(index: Index, queries: FeatureMatrix, k: int) -> list:
    """One Ranking per query row, each truncated at k."""
    return [knn(index, queries.features[i], k,
                query_id=queries.ids[i], query_label=int(queries.labels[i]))
            for i in range(queries.n)]


def map_at_k(index: Index, queries: FeatureMatrix, k: int,
             mode: str = "truncated") -> np.ndarray:
    """Mean average precision at every cutoff 1..k.

    Entry j is the mean over queries of AP computed on the top-(j+1) items,
    so the final entry is the usual mAP@k. Relevance means equal labels.
    """
    if mode not in AP_MODES:
        raise ValueError(f"mode must be one of {AP_MODES}")
    if queries.n == 0:
        raise ValueError("no query rows")
    k = min(k, index.n)
    curve = np.zeros(k)
    for ranking in rank_queries(index, queries, k):
        rel = np.array([item.relevant for item in ranking.items], dtype=np.float64)
        hits = np.cumsum(rel)
        numer = np.cumsum((hits / np.arange(1, k + 1)) * rel)
        if mode == "truncated":
            denom = hits
        else:
            denom = np.full(k, float(ranking.n_relevant_in_index))
        ap = np.divide(numer, denom, out=np.zeros(k), where=denom > 0)
        curve += ap
    return curve / queries.n


def retrieval_confusion(index: Index, queries: FeatureMatrix, k: int,
                        n_classes: int | None = None) -> np.ndarray:
    """Row i, column j: the fraction of top-k retrievals labeled j, averaged
    over queries whose true label is i. Rows of classes with no queries stay
    all-zero; every populated row sums to 1."""
    if n_classes is None:
        candidates = [int(index.labels.max(initial=-1)), int(queries.labels.max(initial=-1))]
        n_classes = max(candidates) + 1
    if n_classes < 1:
        raise ValueError("no labeled queries to tabulate")
    counts = np.zeros((n_classes, n_classes))
    rows = np.zeros(n_classes)
    k = min(k, index.n)
    label_of = {item_id: int(lab) for item_id, lab in zip(index.ids, index.labels)}
    for i, ranking in enumerate(rank_queries(index, queries, k)):
        qlab = int(queries.labels[i])
        if qlab < 0:
            continue
        rows[qlab] += 1
        for item in ranking.items:
            counts[qlab, label_of[item.item_id]] += 1.0 / len(ranking.items)
    live = rows > 0
    counts[live] /= rows[live, None]
    return counts
