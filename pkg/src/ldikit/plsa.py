"""Probabilistic latent semantic ranking fit by tempered EM.

The aspect model factors P(w|d) = sum_z P(z|d) P(w|z).  Fitting anneals an
exponent on P(w|z) in the E-step: whenever held-out token perplexity stops
improving at the current temperature the exponent is lowered, and training
ends when lowering it no longer helps.  The tempered data objective
sum n log sum_z P(z|d) P(w|z)^beta is what each fixed-temperature block
ascends; the plain likelihood is not monotone across temperature changes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import logsumexp

from .corpus import TermDocCounts

_PERPLEXITY_FLOOR_MIX = 1e-6    # uniform mass mixed in for held-out scoring


@dataclass
class TemperingSchedule:
    """Annealing control: when to lower the E-step exponent and when to stop."""

    beta_start: float = 1.0
    beta_decay: float = 0.9
    min_beta: float = 0.5
    holdout_fraction: float = 0.1
    improvement_tol: float = 1e-6   # relative perplexity gain that counts
    max_iters_per_beta: int = 200
    max_total_iters: int = 1000


@dataclass
class PlsaModel:
    """Fitted aspect model: topic mixtures per document, word tables, and
    the temperature the fit ended at."""

    k: int
    p_dz: np.ndarray            # (docs, k) rows sum to one
    p_wz: np.ndarray            # (k, vocabulary) rows sum to one
    beta_temp: float
    seed: int = 0


@dataclass
class PlsaTrainResult:
    model: PlsaModel
    objective_trace: list[tuple[float, float]] = field(default_factory=list)
    perplexity_trace: list[float] = field(default_factory=list)
    train_matrix: sp.csr_matrix | None = None
    held_matrix: sp.csr_matrix | None = None


def split_holdout(matrix: sp.csr_matrix, fraction: float, seed: int):
    """Randomly hold out roughly ``fraction`` of the observed tokens.

    Operates cell-wise with binomial draws, so the split is by token, not
    by document or by term.
    """
    matrix = matrix.tocsr()
    rng = np.random.default_rng(seed)
    held_data = rng.binomial(matrix.data.astype(np.int64), fraction)
    train = matrix.copy()
    train.data = matrix.data - held_data
    held = matrix.copy()
    held.data = held_data
    train.eliminate_zeros()
    held.eliminate_zeros()
    return train.astype(np.int64), held.astype(np.int64)


def _em_pass(matrix: sp.csr_matrix, p_dz: np.ndarray, p_wz: np.ndarray,
             beta_temp: float, chunk: int = 2048):
    """One tempered EM sweep.  Returns new tables and the tempered objective
    value at the parameters the sweep started from."""
    n_docs, n_terms = matrix.shape
    k = p_dz.shape[1]
    log_pd = np.log(np.maximum(p_dz, 1e-300))
    log_pw = np.log(np.maximum(p_wz, 1e-300))
    new_dz = np.zeros_like(p_dz)
    stats_wz = np.zeros_like(p_wz)
    objective = 0.0
    for start in range(0, n_docs, chunk):
        stop = min(start + chunk, n_docs)
        sub = matrix[start:stop]
        counts = sub.data.astype(float)
        if len(counts) == 0:
            continue
        token_doc = np.repeat(np.arange(sub.shape[0]), np.diff(sub.indptr))
        token_term = sub.indices
        lq = log_pd[start:stop][token_doc] + beta_temp * log_pw[:, token_term].T
        lse = logsumexp(lq, axis=1)
        objective += float(counts @ lse)
        q = np.exp(lq - lse[:, None])
        weighted = counts[:, None] * q
        gather = sp.csr_matrix(
            (counts, (token_doc, np.arange(len(counts)))),
            shape=(sub.shape[0], len(counts)))
        new_dz[start:stop] = gather @ q
        for topic in range(k):
            stats_wz[topic] += np.bincount(token_term, weights=weighted[:, topic],
                                           minlength=n_terms)
    doc_totals = new_dz.sum(axis=1, keepdims=True)
    new_dz = np.where(doc_totals > 0, new_dz / np.maximum(doc_totals, 1.0),
                      1.0 / k)
    topic_totals = stats_wz.sum(axis=1, keepdims=True)
    stats_wz = np.where(topic_totals > 0, stats_wz / np.maximum(topic_totals, 1.0),
                        1.0 / n_terms)
    return new_dz, stats_wz, objective


def tempered_objective(matrix: sp.csr_matrix, p_dz, p_wz, beta_temp: float) -> float:
    """sum over cells of n * log sum_z P(z|d) P(w|z)^beta."""
    matrix = matrix.tocsr()
    log_pd = np.log(np.maximum(p_dz, 1e-300))
    log_pw = np.log(np.maximum(p_wz, 1e-300))
    token_doc = np.repeat(np.arange(matrix.shape[0]), np.diff(matrix.indptr))
    lq = log_pd[token_doc] + beta_temp * log_pw[:, matrix.indices].T
    return float(matrix.data @ logsumexp(lq, axis=1))


def holdout_perplexity(held: sp.csr_matrix, p_dz, p_wz) -> float:
    """Perplexity of held-out tokens under the untempered mixture.

    A vanishing uniform component keeps fully-held-out terms finite.
    """
    held = held.tocsr()
    total = held.data.sum()
    if total == 0:
        return float("nan")
    n_terms = p_wz.shape[1]
    token_doc = np.repeat(np.arange(held.shape[0]), np.diff(held.indptr))
    probs = np.sum(p_dz[token_doc] * p_wz[:, held.indices].T, axis=1)
    probs = (1.0 - _PERPLEXITY_FLOOR_MIX) * probs + _PERPLEXITY_FLOOR_MIX / n_terms
    log_lik = float(held.data @ np.log(probs))
    return float(np.exp(-log_lik / total))


def _init_tables(n_docs: int, n_terms: int, k: int, seed: int):
    rng = np.random.default_rng(seed)
    p_dz = rng.random((n_docs, k)) + 1.0 / k
    p_dz /= p_dz.sum(axis=1, keepdims=True)
    p_wz = rng.random((k, n_terms)) + 1.0 / n_terms
    p_wz /= p_wz.sum(axis=1, keepdims=True)
    return p_dz, p_wz


def train_plsa(counts: TermDocCounts, k: int, seed: int = 0,
               schedule: TemperingSchedule | None = None) -> PlsaTrainResult:
    """Tempered EM with early stopping on held-out token perplexity.

    The returned model is the snapshot with the best held-out perplexity
    seen anywhere during the anneal, tagged with the temperature it was
    taken at.
    """
    if k < 1:
        raise ValueError("topic count must be at least 1")
    schedule = schedule or TemperingSchedule()
    matrix = counts.matrix.tocsr()
    train, held = split_holdout(matrix, schedule.holdout_fraction, seed)
    if held.data.sum() == 0 or train.data.sum() == 0:
        # tiny corpora: anneal without a held-out signal, single temperature
        train, held = matrix, None

    p_dz, p_wz = _init_tables(matrix.shape[0], matrix.shape[1], k, seed)
    beta_temp = schedule.beta_start
    trace: list[tuple[float, float]] = []
    perps: list[float] = []
    best = (np.inf, p_dz.copy(), p_wz.copy(), beta_temp)
    best_prev_beta = np.inf
    best_this_beta = np.inf
    iters_this_beta = 0
    total_iters = 0

    while total_iters < schedule.max_total_iters:
        p_dz, p_wz, objective = _em_pass(train, p_dz, p_wz, beta_temp)
        trace.append((beta_temp, objective))
        total_iters += 1
        iters_this_beta += 1

        if held is None:
            # no perplexity signal: run a fixed budget at the start temperature
            best = (0.0, p_dz.copy(), p_wz.copy(), beta_temp)
            if iters_this_beta >= schedule.max_iters_per_beta:
                break
            continue

        perp = holdout_perplexity(held, p_dz, p_wz)
        perps.append(perp)
        if perp < best[0]:
            best = (perp, p_dz.copy(), p_wz.copy(), beta_temp)
        improved = perp < best_this_beta * (1.0 - schedule.improvement_tol)
        if improved:
            best_this_beta = perp
        if improved and iters_this_beta < schedule.max_iters_per_beta:
            continue

        # this temperature is exhausted
        if (best_this_beta < best_prev_beta * (1.0 - schedule.improvement_tol)
                and beta_temp * schedule.beta_decay >= schedule.min_beta):
            best_prev_beta = best_this_beta
            best_this_beta = np.inf
            beta_temp *= schedule.beta_decay
            iters_this_beta = 0
        else:
            break
    else:
        warnings.warn("tempered EM hit the total iteration cap")

    _, p_dz, p_wz, beta_final = best
    model = PlsaModel(k=k, p_dz=p_dz, p_wz=p_wz, beta_temp=beta_final, seed=seed)
    return PlsaTrainResult(model=model, objective_trace=trace,
                           perplexity_trace=perps, train_matrix=train,
                           held_matrix=held if held is not None else None)


def fold_in(model: PlsaModel, query_counts, max_iters: int = 50,
            tol: float = 1e-6):
    """Topic mixtures for held-out texts with the word tables frozen.

    EM over P(z|q) only, run at the model's final temperature.  Returns the
    mixture rows and a mask of rows that had any in-vocabulary term (others
    are uniform).
    """
    rows = sp.csr_matrix(query_counts if sp.issparse(query_counts)
                         else np.atleast_2d(np.asarray(query_counts)),
                         dtype=float).tocsr()
    n_rows = rows.shape[0]
    k = model.k
    log_pw = np.log(np.maximum(model.p_wz, 1e-300))
    counts = rows.data.astype(float)
    token_doc = np.repeat(np.arange(n_rows), np.diff(rows.indptr))
    token_term = rows.indices
    lengths = np.asarray(rows.sum(axis=1)).ravel()
    evidence = lengths > 0

    p_qz = np.full((n_rows, k), 1.0 / k)
    if len(counts):
        gather = sp.csr_matrix((counts, (token_doc, np.arange(len(counts)))),
                               shape=(n_rows, len(counts)))
        lw = model.beta_temp * log_pw[:, token_term].T
        for _ in range(max_iters):
            lq = np.log(np.maximum(p_qz, 1e-300))[token_doc] + lw
            q = np.exp(lq - logsumexp(lq, axis=1, keepdims=True))
            new = gather @ q
            new = np.where(evidence[:, None],
                           new / np.maximum(lengths, 1.0)[:, None], 1.0 / k)
            change = np.abs(new - p_qz).sum(axis=1).max()
            p_qz = new
            if change < tol:
                break
    return p_qz, evidence


def continue_tempering_by_precision(result: PlsaTrainResult, corpus,
                                    schedule: TemperingSchedule | None = None,
                                    max_rounds: int = 20):
    """Keep lowering the temperature while validation MAP strictly improves.

    Each round drops the temperature one decay step, refits until the
    held-out perplexity stops improving at that temperature, and keeps the
    refit model only if mean average precision on the corpus queries beats
    the best seen so far.  Returns (best model, [(temperature, MAP), ...]).
    """
    from .metrics import evaluate_scores

    schedule = schedule or TemperingSchedule()

    def validation_map(m: PlsaModel) -> float:
        scores = score_plsa(m, corpus.query_counts)
        return evaluate_scores(scores, corpus.query_ids, corpus.doc_ids,
                               corpus.qrels).map_score

    train = (result.train_matrix if result.train_matrix is not None
             else corpus.counts.matrix.tocsr())
    held = result.held_matrix
    best_model = result.model
    best_map = validation_map(best_model)
    history = [(best_model.beta_temp, best_map)]
    p_dz = best_model.p_dz.copy()
    p_wz = best_model.p_wz.copy()
    beta_temp = best_model.beta_temp

    for _ in range(max_rounds):
        beta_temp *= schedule.beta_decay
        if beta_temp < 0.05:
            break
        local_best_perp = np.inf
        local_best = (p_dz.copy(), p_wz.copy())
        for _ in range(schedule.max_iters_per_beta):
            p_dz, p_wz, _ = _em_pass(train, p_dz, p_wz, beta_temp)
            if held is None:
                local_best = (p_dz.copy(), p_wz.copy())
                continue
            perp = holdout_perplexity(held, p_dz, p_wz)
            if perp < local_best_perp * (1.0 - schedule.improvement_tol):
                local_best_perp = perp
                local_best = (p_dz.copy(), p_wz.copy())
            else:
                break
        candidate = PlsaModel(k=best_model.k, p_dz=local_best[0],
                              p_wz=local_best[1], beta_temp=beta_temp,
                              seed=best_model.seed)
        candidate_map = validation_map(candidate)
        history.append((beta_temp, candidate_map))
        if candidate_map > best_map:
            best_map = candidate_map
            best_model = candidate
        else:
            break
    return best_model, history


def score_plsa(model: PlsaModel, query_counts) -> np.ndarray:
    """Cosine between folded-in query mixtures and document mixtures.

    Rows (queries or documents) without topic evidence score zero.
    """
    single = not sp.issparse(query_counts) and np.ndim(query_counts) == 1
    q_mix, q_evidence = fold_in(model, query_counts)
    doc_norms = np.linalg.norm(model.p_dz, axis=1)
    q_norms = np.linalg.norm(q_mix, axis=1, keepdims=True)
    denom = q_norms * doc_norms[None, :]
    raw = q_mix @ model.p_dz.T
    scores = np.divide(raw, denom, out=np.zeros_like(raw), where=denom > 0)
    scores = scores * q_evidence[:, None]
    return scores[0] if single else scores
