"""A built-in ten-document corpus for fast end-to-end demonstrations.

Ten one-line documents span four subjects (technology, business, diet,
genetics), with fourteen content terms and three ready-made queries whose
relevant documents are known.  The canonical count table uses normalized
term forms ("products" counts as "product"), so it is provided directly as
data; the raw sentences are also included for exercising the plain text
pipeline, which does no such normalization.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .corpus import (Collection, Corpus, Query, RawDocument, TermDocCounts,
                     Vocabulary)
from .ensemble import EnsembleWeights, ScoreMatrix, train_ensemble
from .lda import LdaOptions, LdaTrainResult, seeded_topic_start, train_lda
from .ldi import build_index, score_ldi
from .vsm import score_tfidf, train_tfidf

DOC_LABELS = ["T1", "T2", "T3", "B1", "B2", "D1", "D2", "D3", "G1", "G2"]

DOC_TEXTS = [
    "the OS in Apple smartphones",
    "the OS system in Apple products",
    "the sign system in Samsung smartphones",
    "Samsung and Apple signed a contract",
    "there are many kinds of product contracts",
    "fry the apple pie with some peas",
    "the pie should be fried in oil",
    "the way to fry dumplings",
    "the oil is made from genetically-modified bean",
    "the bean is genetically-modified from peas",
]

TERMS = [
    "apple", "smartphone", "os", "system", "product", "contract", "sign",
    "samsung", "pie", "pea", "fry", "oil", "geneticallymodified", "bean",
]

# Rows follow DOC_LABELS, columns follow TERMS; one count per appearance
# of the normalized term in the sentence.
DOC_TERM_COUNTS = np.array([
    # appl smart os  sys prod cont sign sams pie pea fry oil gm  bean
    [1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],   # T1
    [1, 0, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0],   # T2
    [0, 1, 0, 1, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0],   # T3
    [1, 0, 0, 0, 0, 1, 1, 1, 0, 0, 0, 0, 0, 0],   # B1
    [0, 0, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0],   # B2
    [1, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 0, 0, 0],   # D1
    [0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 1, 1, 0, 0],   # D2
    [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0],   # D3
    [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1],   # G1
    [0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 1, 1],   # G2
], dtype=np.int64)

QUERY_TEXTS = [
    "the sign system in Apple",
    "the contract for Apple products",
    "the Apple OS",
]

QUERY_TERMS = [
    ["sign", "system", "apple"],
    ["contract", "apple", "product"],
    ["apple", "os"],
]

# Relevant documents per query, by document id (1-based, DOC_LABELS order).
RELEVANT = {1: {3}, 2: {4, 5}, 3: {1, 2}}

# Reference topic-space similarities (queries by documents), kept as fixed
# data so the boosting demonstration is reproducible: this ranker resolves
# Query 2's "contract" sense and Query 3's polysemous "apple" but slips T3
# to second place on Query 1, the exact complement of the keyword ranker's
# strengths, which is what gives the ensemble something to learn.
REFERENCE_TOPIC_SIMS = np.array([
    # T1     T2     T3     B1     B2     D1     D2     D3     G1     G2
    [0.9475, 0.9885, 0.9692, 0.6734, 0.5681, 0.3076, 0.1261, 0.1296, 0.0213, 0.0213],
    [0.5227, 0.6643, 0.6053, 0.9902, 0.9586, 0.2829, 0.1245, 0.1279, 0.0210, 0.0210],
    [0.9938, 0.9915, 0.9833, 0.4796, 0.3543, 0.3420, 0.1752, 0.1800, 0.0296, 0.0296],
])


def demo_corpus() -> Corpus:
    """The canonical counts wrapped as a ready-to-use corpus."""
    matrix = sp.csr_matrix(DOC_TERM_COUNTS)
    df = np.asarray((matrix > 0).sum(axis=0)).ravel().astype(np.int64)
    cf = np.asarray(matrix.sum(axis=0)).ravel().astype(np.int64)
    vocab = Vocabulary(terms=list(TERMS),
                       index={t: j for j, t in enumerate(TERMS)}, df=df, cf=cf)
    query_rows = np.zeros((len(QUERY_TERMS), len(TERMS)), dtype=np.int64)
    for i, toks in enumerate(QUERY_TERMS):
        for tok in toks:
            query_rows[i, vocab[tok]] += 1
    return Corpus(
        name="demo",
        doc_ids=np.arange(1, len(DOC_LABELS) + 1, dtype=np.int64),
        query_ids=np.arange(1, len(QUERY_TERMS) + 1, dtype=np.int64),
        vocabulary=vocab,
        counts=TermDocCounts(
            matrix=matrix,
            doc_lengths=np.asarray(matrix.sum(axis=1)).ravel().astype(np.int64),
        ),
        query_counts=sp.csr_matrix(query_rows),
        qrels={q: set(d) for q, d in RELEVANT.items()},
    )


def raw_collection() -> Collection:
    """The same sentences as unparsed text, for pipeline tests.

    Plain tokenization keeps inflected forms distinct, so the vocabulary
    this produces differs from TERMS.
    """
    docs = [RawDocument(doc_id=i + 1, title="", body=text, source="demo")
            for i, text in enumerate(DOC_TEXTS)]
    queries = [Query(query_id=i + 1, text=text, source="demo")
               for i, text in enumerate(QUERY_TEXTS)]
    return Collection(name="demo-raw", documents=docs, queries=queries,
                      qrels={q: set(d) for q, d in RELEVANT.items()})


def fit_demo_topics(seed: int = 0, k: int = 4,
                    alpha_init: float | None = 0.25,
                    options: LdaOptions | None = None) -> LdaTrainResult:
    """Fit the topic model used by the demonstrations.

    Thirty-one tokens give EM many poor basins, so the fit starts from
    document-cluster topic rows and keeps the prior weight fixed at a
    small value; both choices make the subject split reproducible across
    seeds.  Pass alpha_init=None to estimate the prior instead.
    """
    corpus = demo_corpus()
    options = options or LdaOptions(var_tol=1e-8, em_tol=1e-6,
                                    max_em_iters=200,
                                    estimate_alpha=alpha_init is None)
    start = seeded_topic_start(corpus.counts, k, seed=seed)
    return train_lda(corpus.counts, k=k, seed=seed, alpha_init=alpha_init,
                     options=options, beta_init=start)


def demo_score_matrices(seed: int = 0, k: int = 4):
    """Keyword and topic-space score matrices for the three demo queries."""
    corpus = demo_corpus()
    tfidf = train_tfidf(corpus.counts)
    keyword = score_tfidf(tfidf, corpus.query_counts)
    fit = fit_demo_topics(seed=seed, k=k)
    index = build_index(fit.model, corpus.counts)
    topical = score_ldi(index, corpus.query_counts)
    mats = [
        ScoreMatrix("tfidf", keyword, corpus.query_ids, corpus.doc_ids),
        ScoreMatrix("ldi", topical, corpus.query_ids, corpus.doc_ids),
    ]
    return corpus, mats


def demo_boosting(seed: int = 0, eps: float = 1e-4,
                  live_topics: bool = False) -> EnsembleWeights:
    """Fuse the keyword ranker with a topic ranker; reaches perfect MAP.

    By default the topic side uses REFERENCE_TOPIC_SIMS, whose one weak
    query complements the keyword ranker's one weak query, so the rounds
    play out the same way every run: the keyword model is picked first,
    its failing query gets up-weighted, the topic model repairs it, and
    training MAP reaches one.  With live_topics=True the topic scores
    come from a freshly fitted model instead; a good fit can be perfect
    on its own, which ends the run in one round.
    """
    corpus = demo_corpus()
    if live_topics:
        corpus, mats = demo_score_matrices(seed=seed)
    else:
        tfidf = train_tfidf(corpus.counts)
        keyword = score_tfidf(tfidf, corpus.query_counts)
        mats = [
            ScoreMatrix("tfidf", keyword, corpus.query_ids, corpus.doc_ids),
            ScoreMatrix("ldi", REFERENCE_TOPIC_SIMS.copy(),
                        corpus.query_ids, corpus.doc_ids),
        ]
    return train_ensemble(mats, corpus.qrels, eps=eps)
