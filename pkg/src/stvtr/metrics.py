"""Graded-relevance retrieval metrics: mAP and nDCG in both directions.

Rankings sort scores descending with ties broken by stable index order,
so the metrics are invariant under strictly monotone score transforms.
Queries with no relevant items are excluded and counted.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np


def _ranking(scores: np.ndarray) -> np.ndarray:
    return np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")


def average_precision(scores, relevant) -> float:
    """Mean precision-at-rank over the relevant items' ranks."""
    rel = np.asarray(relevant, dtype=bool)
    if not rel.any():
        raise ValueError("average_precision needs at least one relevant item")
    order = _ranking(scores)
    hits = rel[order]
    ranks = np.flatnonzero(hits) + 1
    precisions = np.cumsum(hits)[ranks - 1] / ranks
    return float(precisions.mean())


def ndcg(scores, gains) -> float:
    """DCG with linear gains and 1/log2(rank+1) discount, divided by the ideal."""
    g = np.asarray(gains, dtype=np.float64)
    if not (g > 0).any():
        raise ValueError("ndcg needs some nonzero relevance")
    order = _ranking(scores)
    discounts = 1.0 / np.log2(np.arange(2, len(g) + 2))
    dcg = float((g[order] * discounts).sum())
    ideal = float((np.sort(g)[::-1] * discounts).sum())
    return dcg / ideal


@dataclass
class RetrievalReport:
    map_v2t: float
    map_t2v: float
    ndcg_v2t: float
    ndcg_t2v: float
    n_videos: int
    n_texts: int
    skipped_map_queries: int = 0
    skipped_ndcg_queries: int = 0
    per_query: dict = field(default_factory=dict)

    @property
    def map_avg(self) -> float:
        return 0.5 * (self.map_v2t + self.map_t2v)

    @property
    def ndcg_avg(self) -> float:
        return 0.5 * (self.ndcg_v2t + self.ndcg_t2v)

    def to_dict(self, include_per_query: bool = False) -> dict:
        d = {
            "map": {"v2t": self.map_v2t, "t2v": self.map_t2v, "avg": self.map_avg},
            "ndcg": {"v2t": self.ndcg_v2t, "t2v": self.ndcg_t2v, "avg": self.ndcg_avg},
            "n_videos": self.n_videos,
            "n_texts": self.n_texts,
            "skipped": {
                "map": self.skipped_map_queries,
                "ndcg": self.skipped_ndcg_queries,
            },
        }
        if include_per_query and self.per_query:
            d["per_query"] = self.per_query
        return d

    def write_json(self, path, include_per_query: bool = False) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(include_per_query), fh, sort_keys=True, indent=2)
            fh.write("\n")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["metric", "v2t", "t2v", "avg"])
            w.writerow(["map", repr(self.map_v2t), repr(self.map_t2v), repr(self.map_avg)])
            w.writerow(["ndcg", repr(self.ndcg_v2t), repr(self.ndcg_t2v), repr(self.ndcg_avg)])


def _direction(scores_mat: np.ndarray, rel_mat: np.ndarray, threshold: float, collect: bool):
    aps, ndcgs, diag = [], [], []
    skipped_ap = skipped_ndcg = 0
    for q in range(scores_mat.shape[0]):
        scores = scores_mat[q]
        gains = rel_mat[q]
        binary = gains > threshold
        if binary.any():
            ap = average_precision(scores, binary)
            aps.append(ap)
        else:
            ap = None
            skipped_ap += 1
        if (gains > 0).any():
            nd = ndcg(scores, gains)
            ndcgs.append(nd)
        else:
            nd = None
            skipped_ndcg += 1
        if collect:
            diag.append({"ap": ap, "ndcg": nd})
    mean_ap = float(np.mean(aps)) if aps else 0.0
    mean_ndcg = float(np.mean(ndcgs)) if ndcgs else 0.0
    return mean_ap, mean_ndcg, skipped_ap, skipped_ndcg, diag


def evaluate_retrieval(
    video_embs: np.ndarray,
    text_embs: np.ndarray,
    relevancy_matrix: np.ndarray,
    threshold: float = 0.0,
    per_query: bool = False,
) -> RetrievalReport:
    """mAP (relevance binarized at > threshold) and nDCG (graded), both ways.

    Embedding batches must be unit-norm rows aligned with the relevancy
    matrix (videos x texts).
    """
    v = np.asarray(video_embs)
    t = np.asarray(text_embs)
    rel = np.asarray(relevancy_matrix)
    if rel.shape != (v.shape[0], t.shape[0]):
        raise ValueError(
            f"relevancy {rel.shape} does not align with {v.shape[0]} videos x {t.shape[0]} texts"
        )
    for name, e in (("video", v), ("text", t)):
        norms = np.linalg.norm(e, axis=1)
        if not np.allclose(norms, 1.0, atol=1e-6):
            raise ValueError(f"{name} embeddings are not unit-norm")
    S = v @ t.T
    map_v2t, ndcg_v2t, sk_ap_v, sk_nd_v, diag_v = _direction(S, rel, threshold, per_query)
    map_t2v, ndcg_t2v, sk_ap_t, sk_nd_t, diag_t = _direction(S.T, rel.T, threshold, per_query)
    report = RetrievalReport(
        map_v2t=map_v2t,
        map_t2v=map_t2v,
        ndcg_v2t=ndcg_v2t,
        ndcg_t2v=ndcg_t2v,
        n_videos=v.shape[0],
        n_texts=t.shape[0],
        skipped_map_queries=sk_ap_v + sk_ap_t,
        skipped_ndcg_queries=sk_nd_v + sk_nd_t,
    )
    if per_query:
        report.per_query = {"v2t": diag_v, "t2v": diag_t}
    return report
