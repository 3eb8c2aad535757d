"""Orchestration: train any ranker on a corpus, score its queries, persist.

The four trainable methods share one interface here so the command line and
the experiment scripts can treat them uniformly.  The topic-space ranker is
served by the ``lda`` method: its index derives from the fitted topic-term
table and the corpus counts at scoring time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import bundle
from .corpus import Corpus
from .ensemble import ScoreMatrix
from .lda import LdaModel, LdaOptions, train_lda
from .ldi import build_index, score_ldi
from .lsa import LsiModel, SvdFactors, score_lsi, train_lsi
from .metrics import EvalReport, evaluate_scores
from .plsa import (PlsaModel, TemperingSchedule, continue_tempering_by_precision,
                   score_plsa, train_plsa)
from .vsm import TfIdfModel, score_tfidf, train_tfidf

METHODS = ("tfidf", "lsi", "plsi", "lda")
METHOD_ALIASES = {"ldi": "lda"}


def resolve_method(name: str) -> str:
    method = METHOD_ALIASES.get(name.lower(), name.lower())
    if method not in METHODS:
        raise ValueError(f"unknown method {name!r}; choose from "
                         f"{', '.join(METHODS + tuple(METHOD_ALIASES))}")
    return method


@dataclass
class FittedModel:
    """A trained ranker bound to the corpus it was fitted on."""

    kind: str
    payload: object
    corpus_checksum: str
    corpus_name: str
    k: int | None = None
    seed: int = 0
    extra: dict | None = None


def train_model(corpus: Corpus, method: str, k: int | None = None,
                seed: int = 0, tune_by_precision: bool = False,
                lda_options: LdaOptions | None = None,
                schedule: TemperingSchedule | None = None) -> FittedModel:
    """Fit one ranker.  Topic methods require ``k``; tfidf ignores it."""
    method = resolve_method(method)
    checksum = corpus.checksum()
    if method == "tfidf":
        payload = train_tfidf(corpus.counts)
        return FittedModel("tfidf", payload, checksum, corpus.name, seed=seed)
    if k is None:
        raise ValueError(f"method {method!r} needs a topic count")
    if method == "lsi":
        payload = train_lsi(corpus.counts, k=k, seed=seed)
        return FittedModel("lsi", payload, checksum, corpus.name, k=k, seed=seed)
    if method == "plsi":
        result = train_plsa(corpus.counts, k=k, seed=seed, schedule=schedule)
        model = result.model
        if tune_by_precision:
            model, _ = continue_tempering_by_precision(result, corpus,
                                                       schedule=schedule)
        return FittedModel("plsi", model, checksum, corpus.name, k=k, seed=seed,
                           extra={"beta_temp": model.beta_temp})
    result = train_lda(corpus.counts, k=k, seed=seed, options=lda_options)
    return FittedModel("lda", result.model, checksum, corpus.name, k=k,
                       seed=seed,
                       extra={"alpha": result.model.alpha,
                              "converged": result.converged,
                              "elbo": result.elbo_trace[-1]})


def score_corpus(fitted: FittedModel, corpus: Corpus,
                 tag: str | None = None) -> ScoreMatrix:
    """Score every corpus query against every document."""
    if fitted.corpus_checksum != corpus.checksum():
        raise ValueError(
            f"model was fitted on corpus {fitted.corpus_name!r} with a "
            "different content hash; refusing to score")
    queries = corpus.query_counts
    if fitted.kind == "tfidf":
        scores = score_tfidf(fitted.payload, queries)
    elif fitted.kind == "lsi":
        scores = score_lsi(fitted.payload, queries)
    elif fitted.kind == "plsi":
        scores = score_plsa(fitted.payload, queries)
    elif fitted.kind == "lda":
        index = build_index(fitted.payload, corpus.counts)
        scores = score_ldi(index, queries)
    else:
        raise ValueError(f"unknown model kind {fitted.kind!r}")
    return ScoreMatrix(tag=tag or fitted.kind, scores=np.asarray(scores),
                       query_ids=corpus.query_ids, doc_ids=corpus.doc_ids)


def evaluate_matrix(matrix: ScoreMatrix, corpus: Corpus) -> EvalReport:
    return evaluate_scores(matrix.scores, matrix.query_ids, matrix.doc_ids,
                           corpus.qrels)


def save_fitted(fitted: FittedModel, out_dir):
    """Persist a fitted model as a bundle directory."""
    manifest = {
        "corpus_checksum": fitted.corpus_checksum,
        "corpus_name": fitted.corpus_name,
        "k": fitted.k,
        "seed": fitted.seed,
    }
    if fitted.extra:
        manifest.update(fitted.extra)
    payload = fitted.payload
    if fitted.kind == "tfidf":
        arrays = {"idf": payload.idf, "doc_vectors": payload.doc_vectors}
        manifest["n_docs"] = payload.n_docs
    elif fitted.kind == "lsi":
        arrays = {"idf": payload.tfidf.idf, "u": payload.factors.u,
                  "s": payload.factors.s, "vt": payload.factors.vt}
        manifest["n_docs"] = payload.tfidf.n_docs
        manifest["requested_k"] = payload.factors.requested_k
    elif fitted.kind == "plsi":
        arrays = {"p_dz": payload.p_dz, "p_wz": payload.p_wz}
        manifest["beta_temp"] = payload.beta_temp
    elif fitted.kind == "lda":
        arrays = {"beta": payload.beta}
        manifest["alpha"] = payload.alpha
    else:
        raise ValueError(f"unknown model kind {fitted.kind!r}")
    return bundle.save_model(out_dir, fitted.kind, manifest, arrays)


def load_fitted(in_dir) -> FittedModel:
    manifest, arrays = bundle.load_model(in_dir)
    kind = manifest["kind"]
    k = manifest.get("k")
    seed = manifest.get("seed", 0)
    if kind == "tfidf":
        payload = TfIdfModel(idf=arrays["idf"],
                             doc_vectors=arrays["doc_vectors"].astype(float),
                             n_docs=int(manifest["n_docs"]))
    elif kind == "lsi":
        factors = SvdFactors(u=arrays["u"], s=arrays["s"], vt=arrays["vt"],
                             requested_k=int(manifest.get("requested_k", k)))
        n_docs = int(manifest["n_docs"])
        empty = sp.csr_matrix((n_docs, len(arrays["idf"])))
        payload = LsiModel(tfidf=TfIdfModel(idf=arrays["idf"],
                                            doc_vectors=empty, n_docs=n_docs),
                           factors=factors)
    elif kind == "plsi":
        payload = PlsaModel(k=int(k), p_dz=arrays["p_dz"], p_wz=arrays["p_wz"],
                            beta_temp=float(manifest["beta_temp"]), seed=seed)
    elif kind == "lda":
        payload = LdaModel(k=int(k), alpha=float(manifest["alpha"]),
                           beta=arrays["beta"], seed=seed)
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    return FittedModel(kind=kind, payload=payload,
                       corpus_checksum=manifest["corpus_checksum"],
                       corpus_name=manifest.get("corpus_name", ""), k=k,
                       seed=seed)


def sweep_topics(corpus: Corpus, method: str, ks, seeds,
                 tune_by_precision: bool = False) -> list[dict]:
    """MAP for each (topic count, seed) pair of one method."""
    rows = []
    for k in ks:
        for seed in seeds:
            fitted = train_model(corpus, method, k=k, seed=seed,
                                 tune_by_precision=tune_by_precision)
            report = evaluate_matrix(score_corpus(fitted, corpus), corpus)
            rows.append({"method": resolve_method(method), "k": int(k),
                         "seed": int(seed), "map": report.map_score})
    return rows
