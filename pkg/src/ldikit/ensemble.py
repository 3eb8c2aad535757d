"""Boosted fusion of constituent rankers over shared score matrices.

Constituents are frozen rankers represented by their full query-by-document
score matrices.  Fusion learns one nonnegative weight per constituent by an
iterative reweighting scheme: each round picks the constituent that looks
best under the current query weights, grants it a closed-form weight
increment, then re-focuses the query weights on whatever the combined
ranking still gets wrong.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .metrics import (ap_matrix, average_precision, mean_average_precision,
                      rank_documents)

AP_CLIP = 1e-6


@dataclass
class ScoreMatrix:
    """One ranker's scores for every (query, document) pair."""

    tag: str
    scores: np.ndarray
    query_ids: np.ndarray
    doc_ids: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float)
        self.query_ids = np.asarray(self.query_ids, dtype=np.int64)
        self.doc_ids = np.asarray(self.doc_ids, dtype=np.int64)
        if self.scores.shape != (len(self.query_ids), len(self.doc_ids)):
            raise ValueError(f"{self.tag}: score shape does not match ids")

    def take_queries(self, rows: np.ndarray) -> "ScoreMatrix":
        return ScoreMatrix(tag=self.tag, scores=self.scores[rows],
                           query_ids=self.query_ids[rows], doc_ids=self.doc_ids)


def validate_alignment(matrices: list[ScoreMatrix]) -> None:
    if not matrices:
        raise ValueError("no score matrices")
    first = matrices[0]
    for m in matrices[1:]:
        if not np.array_equal(m.query_ids, first.query_ids):
            raise ValueError(f"{m.tag}: query ids differ from {first.tag}")
        if not np.array_equal(m.doc_ids, first.doc_ids):
            raise ValueError(f"{m.tag}: doc ids differ from {first.tag}")


def combined_scores(alpha: np.ndarray, matrices: list[ScoreMatrix]) -> np.ndarray:
    """Weighted sum of constituent score matrices."""
    validate_alignment(matrices)
    alpha = np.asarray(alpha, dtype=float)
    if len(alpha) != len(matrices):
        raise ValueError("one weight per constituent required")
    out = np.zeros_like(matrices[0].scores)
    for a, m in zip(alpha, matrices):
        out += a * m.scores
    return out


def normalize_weights(alpha: np.ndarray) -> np.ndarray:
    """Scale weights to sum to one for reporting; ranking is scale-free."""
    alpha = np.asarray(alpha, dtype=float)
    total = alpha.sum()
    if total <= 0:
        raise ValueError("weights must have positive total")
    return alpha / total


def step_size(weights: np.ndarray, aps: np.ndarray) -> float:
    """Closed-form weight increment: half the log odds of the weighted
    precision margin.  Average precisions are clipped away from 0 and 1 so
    the increment stays finite."""
    weights = np.asarray(weights, dtype=float)
    aps = np.clip(np.asarray(aps, dtype=float), AP_CLIP, 1.0 - AP_CLIP)
    up = float(weights @ (1.0 + aps))
    down = float(weights @ (1.0 - aps))
    return 0.5 * np.log(up / down)


def reweight_queries(ensemble_aps: np.ndarray) -> np.ndarray:
    """New query distribution: exponentially emphasize low-precision queries."""
    w = np.exp(-np.asarray(ensemble_aps, dtype=float))
    return w / w.sum()


@dataclass
class BoostRound:
    """What one boosting round did, for inspection and tests."""

    number: int
    model_index: int
    tag: str
    delta: float
    ensemble_map: float
    map_change: float
    query_weights: np.ndarray   # distribution used by this round's selection
    alpha: np.ndarray           # cumulative weights after this round
    pool_reset: bool = False


@dataclass
class EnsembleWeights:
    """Learned fusion: weights, the full round trace, and convergence info."""

    tags: list[str]
    alpha: np.ndarray
    rounds: list[BoostRound] = field(default_factory=list)
    converged: bool = True
    best_round: int = 0
    train_map: float = 0.0

    def normalized(self) -> np.ndarray:
        return normalize_weights(self.alpha)


def _ensemble_aps(scores: np.ndarray, judged_rows: list[int], query_ids,
                  doc_ids, qrels) -> np.ndarray:
    aps = np.empty(len(judged_rows))
    for col, qi in enumerate(judged_rows):
        ranked = rank_documents(scores[qi], doc_ids)
        aps[col] = average_precision(ranked, qrels[int(query_ids[qi])])
    return aps


def select_constituent(weights: np.ndarray, ap_table: np.ndarray,
                       pool: set[int], rule: str = "weighted-ap") -> int:
    """Pick the constituent the current query weights like best.

    ``weighted-ap`` maximizes the weighted mean average precision;
    ``min-sqrt-loss`` minimizes sum_i d_i sqrt(1 - ap_i^2).  Ties go to the
    lowest index.
    """
    candidates = sorted(pool)
    if rule == "weighted-ap":
        values = [ap_table[j] @ weights for j in candidates]
        best = int(np.argmax(values))
    elif rule == "min-sqrt-loss":
        clipped = np.clip(ap_table, AP_CLIP, 1.0 - AP_CLIP)
        values = [weights @ np.sqrt(1.0 - clipped[j] ** 2) for j in candidates]
        best = int(np.argmin(values))
    else:
        raise ValueError(f"unknown selection rule {rule!r}")
    return candidates[best]


def train_ensemble(matrices: list[ScoreMatrix], qrels: dict[int, set[int]],
              eps: float = 1e-4, max_rounds: int = 200,
              selection: str = "weighted-ap") -> EnsembleWeights:
    """Learn fusion weights by query-weighted boosting.

    Rounds continue while each one still moves training MAP by more than
    ``eps``; a constituent leaves the candidate pool after being picked and
    the pool refills once empty.  The returned weights are the snapshot from
    the earliest round achieving the best training MAP; a round-limit exit
    is reported through ``converged=False``.
    """
    validate_alignment(matrices)
    query_ids = matrices[0].query_ids
    doc_ids = matrices[0].doc_ids
    judged_rows = [qi for qi, qid in enumerate(query_ids)
                   if qrels.get(int(qid))]
    if not judged_rows:
        raise ValueError("no judged queries to train on")

    ap_table = ap_matrix([m.scores for m in matrices], query_ids, doc_ids,
                         qrels)
    n_models = len(matrices)
    n_queries = len(judged_rows)
    weights = np.full(n_queries, 1.0 / n_queries)
    alpha = np.zeros(n_models)
    pool = set(range(n_models))
    trace: list[BoostRound] = []
    prev_map = 0.0
    converged = False

    for number in range(1, max_rounds + 1):
        chosen = select_constituent(weights, ap_table, pool, selection)
        delta = step_size(weights, ap_table[chosen])
        alpha[chosen] += delta
        ensemble = combined_scores(alpha, matrices)
        h_aps = _ensemble_aps(ensemble, judged_rows, query_ids, doc_ids, qrels)
        current_map = mean_average_precision(h_aps)
        change = abs(current_map - prev_map)

        stopping = change <= eps
        reset = False
        if not stopping:
            pool.discard(chosen)
            reset = not pool
            if reset:
                pool = set(range(n_models))
        trace.append(BoostRound(
            number=number, model_index=chosen, tag=matrices[chosen].tag,
            delta=delta, ensemble_map=current_map, map_change=change,
            query_weights=weights.copy(), alpha=alpha.copy(),
            pool_reset=reset,
        ))
        if stopping:
            converged = True
            break
        weights = reweight_queries(h_aps)
        prev_map = current_map

    best_round = int(np.argmax([r.ensemble_map for r in trace]))
    best = trace[best_round]
    return EnsembleWeights(
        tags=[m.tag for m in matrices], alpha=best.alpha.copy(), rounds=trace,
        converged=converged, best_round=best_round,
        train_map=best.ensemble_map,
    )


def uniform_weights(matrices: list[ScoreMatrix]) -> EnsembleWeights:
    """The no-training baseline: every constituent weighted equally."""
    validate_alignment(matrices)
    n = len(matrices)
    return EnsembleWeights(tags=[m.tag for m in matrices],
                           alpha=np.full(n, 1.0 / n), rounds=[],
                           converged=True, best_round=0, train_map=0.0)


def ensemble_loss(h_aps) -> float:
    """Total shortfall from perfect precision over the training queries."""
    return float(np.sum(1.0 - np.asarray(h_aps, dtype=float)))


def exp_loss_bound(h_aps) -> float:
    """Exponential surrogate that upper-bounds the loss above."""
    return float(np.sum(np.exp(-np.asarray(h_aps, dtype=float))))


@dataclass
class FoldResult:
    train_rows: np.ndarray
    test_rows: np.ndarray
    weights: EnsembleWeights
    test_map: float
    uniform_test_map: float
    constituent_test_maps: dict[str, float]


@dataclass
class CrossValReport:
    folds: list[FoldResult]

    @property
    def mean_test_map(self) -> float:
        return float(np.mean([f.test_map for f in self.folds]))

    @property
    def mean_uniform_test_map(self) -> float:
        return float(np.mean([f.uniform_test_map for f in self.folds]))

    def mean_constituent_test_maps(self) -> dict[str, float]:
        tags = self.folds[0].constituent_test_maps.keys()
        return {t: float(np.mean([f.constituent_test_maps[t] for f in self.folds]))
                for t in tags}


def _map_of(scores: np.ndarray, sub_query_ids, doc_ids, qrels) -> float:
    rows = [qi for qi, qid in enumerate(sub_query_ids) if qrels.get(int(qid))]
    return mean_average_precision(
        _ensemble_aps(scores, rows, sub_query_ids, doc_ids, qrels))


def cross_validate(matrices: list[ScoreMatrix], qrels: dict[int, set[int]],
                   n_folds: int = 2, seed: int = 0, eps: float = 1e-4,
                   max_rounds: int = 200) -> CrossValReport:
    """Split judged queries into folds by seeded shuffle; train on each
    fold's complement and test on the fold, every direction."""
    validate_alignment(matrices)
    query_ids = matrices[0].query_ids
    judged = np.array([qi for qi, qid in enumerate(query_ids)
                       if qrels.get(int(qid))])
    if len(judged) < n_folds:
        raise ValueError("not enough judged queries for the fold count")
    rng = np.random.default_rng(seed)
    shuffled = judged[rng.permutation(len(judged))]
    folds = np.array_split(shuffled, n_folds)

    results = []
    for test_rows in folds:
        test_set = set(test_rows.tolist())
        train_rows = np.array([qi for qi in shuffled if qi not in test_set])
        train_mats = [m.take_queries(train_rows) for m in matrices]
        test_mats = [m.take_queries(test_rows) for m in matrices]
        weights = train_ensemble(train_mats, qrels, eps=eps, max_rounds=max_rounds)
        doc_ids = matrices[0].doc_ids
        test_ids = matrices[0].query_ids[test_rows]
        test_map = _map_of(combined_scores(weights.alpha, test_mats),
                           test_ids, doc_ids, qrels)
        uni = uniform_weights(matrices)
        uniform_map = _map_of(combined_scores(uni.alpha, test_mats),
                              test_ids, doc_ids, qrels)
        constituent_maps = {m.tag: _map_of(m.scores, test_ids, doc_ids, qrels)
                            for m in test_mats}
        results.append(FoldResult(
            train_rows=train_rows, test_rows=test_rows, weights=weights,
            test_map=test_map, uniform_test_map=uniform_map,
            constituent_test_maps=constituent_maps,
        ))
    return CrossValReport(folds=results)
