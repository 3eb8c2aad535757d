"""Topic-space retrieval on a fitted topic model.

Every term gets a distribution over topics by normalizing the topic-term
table column-wise; documents and queries become length-weighted averages of
their terms' topic distributions; ranking is by cosine in topic space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .corpus import TermDocCounts, Vocabulary
from .lda import LdaModel


def word_topic_matrix(beta: np.ndarray) -> np.ndarray:
    """Per-term topic distribution: column-normalize the (topics x terms) table.

    Rows of the result index terms and sum to one.  A term with zero weight
    in every topic would be undefined; the smoothed fits used here never
    produce one, but such a row falls back to uniform.
    """
    beta = np.asarray(beta, dtype=float)
    col_totals = beta.sum(axis=0)
    w = np.where(col_totals > 0, beta / np.where(col_totals > 0, col_totals, 1.0),
                 1.0 / beta.shape[0]).T
    return w


def _average_rows(w: np.ndarray, counts) -> tuple[np.ndarray, np.ndarray]:
    """Length-weighted mean of term topic rows for each count row.

    Returns the vectors and a mask of rows that had any in-vocabulary term;
    rows without evidence fall back to the uniform distribution.
    """
    k = w.shape[1]
    matrix = sp.csr_matrix(counts, dtype=float)
    lengths = np.asarray(matrix.sum(axis=1)).ravel()
    raw = matrix @ w
    has_evidence = lengths > 0
    vectors = np.where(has_evidence[:, None], raw / np.maximum(lengths, 1.0)[:, None],
                       1.0 / k)
    return vectors, has_evidence


def document_vectors(w: np.ndarray, counts: TermDocCounts):
    """Topic-space vectors for every document plus an evidence mask."""
    return _average_rows(w, counts.matrix)


def query_vector(w: np.ndarray, query_counts):
    """Topic-space vector for one query count vector plus an evidence flag."""
    vectors, mask = _average_rows(w, np.atleast_2d(np.asarray(query_counts)))
    return vectors[0], bool(mask[0])


def topic_cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine between topic vectors; nonnegative entries keep it in [0, 1]."""
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def term_similarity(w: np.ndarray, term_a: int, term_b: int,
                    metric: str = "cosine") -> float:
    """Similarity of two vocabulary terms in topic space."""
    if metric == "cosine":
        return topic_cosine(w[term_a], w[term_b])
    if metric == "dot":
        return float(np.dot(w[term_a], w[term_b]))
    raise ValueError(f"unknown similarity metric {metric!r}")


@dataclass
class LdiIndex:
    """Precomputed topic-space document vectors ready for query scoring."""

    w: np.ndarray               # (terms, topics) rows sum to one
    doc_vectors: np.ndarray     # (docs, topics) rows sum to one
    doc_evidence: np.ndarray    # docs with at least one in-vocabulary term
    metric: str = "cosine"

    @property
    def k(self) -> int:
        return self.w.shape[1]


def build_index(model: LdaModel, counts: TermDocCounts,
                metric: str = "cosine") -> LdiIndex:
    w = word_topic_matrix(model.beta)
    vectors, evidence = document_vectors(w, counts)
    return LdiIndex(w=w, doc_vectors=vectors, doc_evidence=evidence,
                    metric=metric)


def score_ldi(index: LdiIndex, query_counts) -> np.ndarray:
    """Similarity of each document to each query count row.

    Queries or documents without topic evidence score zero against
    everything rather than matching the uniform fallback vector.
    """
    single = not sp.issparse(query_counts) and np.ndim(query_counts) == 1
    q_vecs, q_evidence = _average_rows(index.w, query_counts if sp.issparse(query_counts)
                                       else np.atleast_2d(np.asarray(query_counts)))
    if index.metric == "dot":
        scores = q_vecs @ index.doc_vectors.T
    else:
        qn = np.linalg.norm(q_vecs, axis=1, keepdims=True)
        dn = np.linalg.norm(index.doc_vectors, axis=1)
        denom = qn * dn[None, :]
        raw = q_vecs @ index.doc_vectors.T
        scores = np.divide(raw, denom, out=np.zeros_like(raw), where=denom > 0)
    scores = scores * q_evidence[:, None]
    scores = scores * index.doc_evidence[None, :]
    return scores[0] if single else scores
