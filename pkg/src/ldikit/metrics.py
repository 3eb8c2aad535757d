"""Rank-based retrieval evaluation: average precision, MAP, PR curves.

All rankings order documents by descending score with ties broken by
ascending document id; every ranking covers the full document list.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

RECALL_LEVELS = np.linspace(0.0, 1.0, 11)


def rank_documents(scores: np.ndarray, doc_ids: np.ndarray) -> np.ndarray:
    """Return doc ids sorted by descending score, ties by ascending id."""
    scores = np.asarray(scores, dtype=float)
    doc_ids = np.asarray(doc_ids)
    if scores.shape != doc_ids.shape:
        raise ValueError("scores and doc_ids must align")
    order = np.lexsort((doc_ids, -scores))
    return doc_ids[order]


def average_precision(ranked_ids, relevant) -> float:
    """Mean over relevant documents of precision at each one's rank.

    Requires a non-empty judgment set wholly contained in the ranking; the
    full ranking participates, with no cutoff.
    """
    relevant = set(relevant)
    if not relevant:
        raise ValueError("average precision needs at least one relevant document")
    ranks = {}
    for rank, did in enumerate(ranked_ids, start=1):
        if did in relevant and did not in ranks:
            ranks[did] = rank
    if len(ranks) != len(relevant):
        missing = sorted(relevant - set(ranks))
        raise ValueError(f"relevant documents missing from ranking: {missing[:5]}")
    # accumulate in rank order, matching the definition term for term
    total = 0.0
    for j, rank in enumerate(sorted(ranks.values()), start=1):
        total += j / rank
    return total / len(ranks)


def mean_average_precision(aps) -> float:
    aps = list(aps)
    if not aps:
        raise ValueError("MAP over an empty query set is undefined")
    return float(np.mean(aps))


def pr_curve(ranked_ids, relevant) -> np.ndarray:
    """Interpolated precision at the 11 standard recall levels.

    Interpolated precision at recall r is the maximum precision achieved at
    any rank whose recall is at least r.
    """
    relevant = set(relevant)
    if not relevant:
        raise ValueError("PR curve needs at least one relevant document")
    n_rel = len(relevant)
    hits = 0
    recalls = []
    precisions = []
    for rank, did in enumerate(ranked_ids, start=1):
        if did in relevant:
            hits += 1
            recalls.append(hits / n_rel)
            precisions.append(hits / rank)
    if hits != n_rel:
        raise ValueError("relevant documents missing from ranking")
    recalls = np.array(recalls)
    precisions = np.array(precisions)
    # running max from the right: best precision at recall >= each hit point
    best_from = np.maximum.accumulate(precisions[::-1])[::-1]
    curve = np.zeros(11)
    for i, level in enumerate(RECALL_LEVELS):
        j = np.searchsorted(recalls, level - 1e-12, side="left")
        curve[i] = best_from[j] if j < len(recalls) else 0.0
    return curve


def macro_average_curve(curves) -> np.ndarray:
    curves = np.asarray(list(curves), dtype=float)
    if curves.size == 0:
        raise ValueError("no curves to average")
    return curves.mean(axis=0)


@dataclass
class EvalReport:
    """Per-query and aggregate retrieval quality for one score matrix."""

    per_query_ap: dict[int, float]
    map_score: float
    curve: np.ndarray
    skipped_queries: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "map": self.map_score,
            "recall_levels": RECALL_LEVELS.tolist(),
            "interpolated_precision": self.curve.tolist(),
            "per_query_ap": {str(k): v for k, v in sorted(self.per_query_ap.items())},
            "skipped_queries": self.skipped_queries,
        }


def evaluate_scores(scores: np.ndarray, query_ids, doc_ids, qrels) -> EvalReport:
    """Score matrix (queries x docs) -> AP per judged query, MAP, macro curve.

    Queries without judgments are skipped and listed, never counted as zero.
    """
    scores = np.asarray(scores, dtype=float)
    query_ids = np.asarray(query_ids)
    doc_ids = np.asarray(doc_ids)
    if scores.shape != (len(query_ids), len(doc_ids)):
        raise ValueError("score matrix shape does not match ids")
    per_query = {}
    curves = []
    skipped = []
    for qi, qid in enumerate(query_ids):
        relevant = qrels.get(int(qid), set())
        if not relevant:
            skipped.append(int(qid))
            continue
        ranked = rank_documents(scores[qi], doc_ids)
        per_query[int(qid)] = average_precision(ranked, relevant)
        curves.append(pr_curve(ranked, relevant))
    if not per_query:
        raise ValueError("no judged queries to evaluate")
    return EvalReport(
        per_query_ap=per_query,
        map_score=mean_average_precision(per_query.values()),
        curve=macro_average_curve(curves),
        skipped_queries=skipped,
    )


def ap_matrix(score_matrices, query_ids, doc_ids, qrels) -> np.ndarray:
    """AP for every (ranker, judged query) pair; queries without judgments
    are excluded from the columns."""
    judged = [qi for qi, qid in enumerate(query_ids) if qrels.get(int(qid))]
    out = np.zeros((len(score_matrices), len(judged)))
    for mi, scores in enumerate(score_matrices):
        for col, qi in enumerate(judged):
            ranked = rank_documents(np.asarray(scores)[qi], doc_ids)
            out[mi, col] = average_precision(ranked, qrels[int(query_ids[qi])])
    return out
