"""Command-line interface.

Exit codes: 0 success, 1 usage problems, 2 unreadable or malformed data,
3 numerical failure during fitting or scoring.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bundle, config, corpus as corpus_mod, pipeline
from .ensemble import (combined_scores, cross_validate, train_ensemble,
                       normalize_weights, uniform_weights, ScoreMatrix)
from .ldi import build_index, word_topic_matrix
from .metrics import evaluate_scores


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="ldikit",
                     description="Topic-space indexing and rank fusion over "
                                 "classic retrieval test collections.")
    sub = parser.add_subparsers(dest="command", required=True)

    corpus_p = sub.add_parser("corpus", parents=[], help="corpus operations")
    corpus_sub = corpus_p.add_subparsers(dest="subcommand", required=True)
    build = corpus_sub.add_parser("build", help="parse collections into a "
                                                "corpus bundle")
    build.add_argument("--spec", action="append", required=True,
                       metavar="NAME=DOCS,QUERIES,QRELS",
                       help="collection to ingest; repeat to merge several")
    build.add_argument("--dialect", default="auto",
                       choices=["auto", "pair", "trec"],
                       help="judgment file layout")
    build.add_argument("--name", default=None, help="corpus name override")
    build.add_argument("--stoplist", default=None,
                       help="path to a custom stop term list")
    build.add_argument("--no-stoplist", action="store_true",
                       help="index every term")
    build.add_argument("--out", required=True, help="bundle directory")

    train = sub.add_parser("train", help="fit a ranker on a corpus bundle")
    train.add_argument("--corpus", required=True)
    train.add_argument("--method", required=True,
                       help="tfidf, lsi, plsi, lda (alias: ldi)")
    train.add_argument("--k", type=int, default=None, help="topic count")
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--tune-by-precision", action="store_true",
                       help="after fitting plsi, keep annealing while "
                            "retrieval precision improves")
    train.add_argument("--out", required=True, help="model bundle directory")

    score = sub.add_parser("score", help="score all corpus queries")
    score.add_argument("--corpus", required=True)
    score.add_argument("--model", required=True)
    score.add_argument("--tag", default=None)
    score.add_argument("--out", required=True, help="score file (.bin or .csv)")

    evalp = sub.add_parser("eval", help="evaluate a score file")
    evalp.add_argument("--corpus", required=True)
    evalp.add_argument("--scores", required=True)
    evalp.add_argument("--out", default=None, help="write the report as JSON")

    ens = sub.add_parser("ensemble", help="rank fusion")
    ens_sub = ens.add_subparsers(dest="subcommand", required=True)
    etrain = ens_sub.add_parser("train", help="learn fusion weights")
    etrain.add_argument("--corpus", required=True)
    etrain.add_argument("--scores", nargs="+", required=True)
    etrain.add_argument("--eps", type=float, default=1e-4)
    etrain.add_argument("--max-rounds", type=int, default=200)
    etrain.add_argument("--selection", default="weighted-ap",
                        choices=["weighted-ap", "min-sqrt-loss"])
    etrain.add_argument("--out", required=True, help="weights JSON file")
    eapply = ens_sub.add_parser("apply", help="combine score files")
    eapply.add_argument("--scores", nargs="+", required=True)
    eapply.add_argument("--weights", default=None,
                        help="weights JSON from 'ensemble train'")
    eapply.add_argument("--uniform", action="store_true",
                        help="equal weights instead of a weights file")
    eapply.add_argument("--tag", default="ensemble")
    eapply.add_argument("--out", required=True)
    ecross = ens_sub.add_parser("crossval", help="two-fold cross-validation")
    ecross.add_argument("--corpus", required=True)
    ecross.add_argument("--scores", nargs="+", required=True)
    ecross.add_argument("--folds", type=int, default=2)
    ecross.add_argument("--seed", type=int, default=0)
    ecross.add_argument("--eps", type=float, default=1e-4)
    ecross.add_argument("--max-rounds", type=int, default=200)
    ecross.add_argument("--out", default=None)

    sweep = sub.add_parser("sweep", help="MAP across topic counts and seeds")
    sweep.add_argument("--corpus", required=True)
    sweep.add_argument("--method", required=True)
    sweep.add_argument("--ks", required=True,
                       help="comma-separated topic counts")
    sweep.add_argument("--seeds", default="0", help="comma-separated seeds")
    sweep.add_argument("--out", default=None)

    ldi = sub.add_parser("ldi", help="topic-space inspection")
    ldi_sub = ldi.add_subparsers(dest="subcommand", required=True)
    inspect = ldi_sub.add_parser("inspect", help="show term topic vectors")
    inspect.add_argument("--corpus", required=True)
    inspect.add_argument("--model", required=True)
    inspect.add_argument("--term", action="append", required=True)
    inspect.add_argument("--top", type=int, default=5,
                         help="closest terms to list")
    return parser


def _load_stoplist(args):
    if args.no_stoplist:
        return None
    if args.stoplist:
        return corpus_mod.load_stoplist(args.stoplist)
    return corpus_mod.smart_stoplist()


def _cmd_corpus_build(args) -> int:
    collections = []
    for spec in args.spec:
        if "=" in spec:
            name, _, paths = spec.partition("=")
        else:
            name, paths = None, spec
        parts = [p.strip() for p in paths.split(",")]
        if len(parts) != 3:
            raise UsageError(f"--spec needs NAME=DOCS,QUERIES,QRELS, got {spec!r}")
        collections.append(corpus_mod.load_collection(
            parts[0], parts[1], parts[2], name=name,
            qrels_dialect=args.dialect))
    if len(collections) == 1:
        collection = collections[0]
        if args.name:
            collection.name = args.name
    else:
        collection = corpus_mod.merge_collections(
            collections, name=args.name or "merged")
    built = corpus_mod.build_corpus(collection, _load_stoplist(args))
    out = corpus_mod.save_corpus(built, config.resolve_out_path(args.out))
    print(f"corpus {built.name!r}: {built.n_docs} documents, "
          f"{built.n_queries} queries, {built.n_terms} terms -> {out}")
    return 0


def _cmd_train(args) -> int:
    built = corpus_mod.load_corpus(args.corpus)
    k = args.k
    if k is None:
        k = config.default_topic_count(args.method, built.name)
    fitted = pipeline.train_model(built, args.method, k=k, seed=args.seed,
                                  tune_by_precision=args.tune_by_precision)
    out = pipeline.save_fitted(fitted, config.resolve_out_path(args.out))
    detail = f", k={fitted.k}" if fitted.k else ""
    print(f"trained {fitted.kind}{detail} on {built.name!r} -> {out}")
    return 0


def _cmd_score(args) -> int:
    built = corpus_mod.load_corpus(args.corpus)
    fitted = pipeline.load_fitted(args.model)
    matrix = pipeline.score_corpus(fitted, built, tag=args.tag)
    out = bundle.save_scores(config.resolve_out_path(args.out), matrix)
    print(f"scored {matrix.scores.shape[0]} queries x "
          f"{matrix.scores.shape[1]} documents -> {out}")
    return 0


def _cmd_eval(args) -> int:
    built = corpus_mod.load_corpus(args.corpus)
    matrix = bundle.load_scores(args.scores)
    report = evaluate_scores(matrix.scores, matrix.query_ids, matrix.doc_ids,
                             built.qrels)
    print(f"MAP {report.map_score:.4f} over {len(report.per_query_ap)} "
          f"judged queries ({len(report.skipped_queries)} skipped)")
    print("interpolated precision: "
          + " ".join(f"{v:.4f}" for v in report.curve))
    if args.out:
        Path(config.resolve_out_path(args.out)).write_text(
            json.dumps(report.to_dict(), indent=1))
    return 0


def _load_score_files(paths) -> list[ScoreMatrix]:
    return [bundle.load_scores(p) for p in paths]


def _cmd_ensemble_train(args) -> int:
    built = corpus_mod.load_corpus(args.corpus)
    matrices = _load_score_files(args.scores)
    weights = train_ensemble(matrices, built.qrels, eps=args.eps,
                        max_rounds=args.max_rounds, selection=args.selection)
    doc = {
        "tags": weights.tags,
        "alpha": weights.alpha.tolist(),
        "normalized": weights.normalized().tolist(),
        "train_map": weights.train_map,
        "converged": weights.converged,
        "best_round": weights.best_round + 1,
        "rounds": [
            {"round": r.number, "picked": r.tag, "delta": r.delta,
             "map": r.ensemble_map, "map_change": r.map_change,
             "pool_reset": r.pool_reset}
            for r in weights.rounds
        ],
    }
    out = config.resolve_out_path(args.out)
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    Path(out).write_text(json.dumps(doc, indent=1))
    print(f"fusion of {len(matrices)} rankers: train MAP "
          f"{weights.train_map:.4f} after {len(weights.rounds)} rounds -> {out}")
    return 0


def _cmd_ensemble_apply(args) -> int:
    matrices = _load_score_files(args.scores)
    if args.uniform == bool(args.weights):
        raise UsageError("pass exactly one of --weights or --uniform")
    if args.uniform:
        alpha = uniform_weights(matrices).alpha
    else:
        doc = json.loads(Path(args.weights).read_text())
        by_tag = dict(zip(doc["tags"], doc["alpha"]))
        missing = [m.tag for m in matrices if m.tag not in by_tag]
        if missing:
            raise ValueError(f"weights file lacks tags {missing}")
        alpha = np.array([by_tag[m.tag] for m in matrices])
    combined = combined_scores(alpha, matrices)
    matrix = ScoreMatrix(tag=args.tag, scores=combined,
                         query_ids=matrices[0].query_ids,
                         doc_ids=matrices[0].doc_ids)
    out = bundle.save_scores(config.resolve_out_path(args.out), matrix)
    print(f"combined {len(matrices)} score files -> {out}")
    return 0


def _cmd_ensemble_crossval(args) -> int:
    built = corpus_mod.load_corpus(args.corpus)
    matrices = _load_score_files(args.scores)
    report = cross_validate(matrices, built.qrels, n_folds=args.folds,
                            seed=args.seed, eps=args.eps,
                            max_rounds=args.max_rounds)
    doc = {
        "folds": [
            {"test_queries": f.test_rows.tolist(),
             "test_map": f.test_map,
             "uniform_test_map": f.uniform_test_map,
             "constituents": f.constituent_test_maps,
             "alpha": f.weights.alpha.tolist(),
             "normalized": f.weights.normalized().tolist()}
            for f in report.folds
        ],
        "mean_test_map": report.mean_test_map,
        "mean_uniform_test_map": report.mean_uniform_test_map,
        "mean_constituent_test_maps": report.mean_constituent_test_maps(),
    }
    print(f"cross-validated fusion: mean test MAP {report.mean_test_map:.4f} "
          f"(uniform {report.mean_uniform_test_map:.4f})")
    if args.out:
        out = config.resolve_out_path(args.out)
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(json.dumps(doc, indent=1))
    return 0


def _cmd_sweep(args) -> int:
    built = corpus_mod.load_corpus(args.corpus)
    ks = [int(v) for v in args.ks.split(",") if v.strip()]
    seeds = [int(v) for v in args.seeds.split(",") if v.strip()]
    rows = pipeline.sweep_topics(built, args.method, ks, seeds)
    for row in rows:
        print(f"k={row['k']:<5d} seed={row['seed']:<3d} MAP {row['map']:.4f}")
    if args.out:
        out = config.resolve_out_path(args.out)
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(json.dumps(rows, indent=1))
    return 0


def _cmd_ldi_inspect(args) -> int:
    built = corpus_mod.load_corpus(args.corpus)
    fitted = pipeline.load_fitted(args.model)
    if fitted.kind != "lda":
        raise ValueError("ldi inspect needs an lda model bundle")
    w = word_topic_matrix(fitted.payload.beta)
    vocab = built.vocabulary
    for term in args.term:
        if term not in vocab:
            print(f"{term}: not in vocabulary")
            continue
        row = w[vocab[term]]
        vec = " ".join(f"{v:.4f}" for v in row)
        print(f"{term}: [{vec}]")
        sims = w @ row / (np.linalg.norm(w, axis=1) * np.linalg.norm(row) + 1e-300)
        order = np.argsort(-sims)
        neighbors = [vocab.terms[j] for j in order if vocab.terms[j] != term]
        print("  nearest: " + ", ".join(neighbors[:args.top]))
    return 0


_DATA_ERRORS = (corpus_mod.ParseError, FileNotFoundError, NotADirectoryError,
                PermissionError, KeyError, ValueError, json.JSONDecodeError)
_NUMERIC_ERRORS = (RuntimeError, FloatingPointError, np.linalg.LinAlgError,
                   OverflowError)


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    handlers = {
        ("corpus", "build"): _cmd_corpus_build,
        ("train", None): _cmd_train,
        ("score", None): _cmd_score,
        ("eval", None): _cmd_eval,
        ("ensemble", "train"): _cmd_ensemble_train,
        ("ensemble", "apply"): _cmd_ensemble_apply,
        ("ensemble", "crossval"): _cmd_ensemble_crossval,
        ("sweep", None): _cmd_sweep,
        ("ldi", "inspect"): _cmd_ldi_inspect,
    }
    handler = handlers[(args.command, getattr(args, "subcommand", None))]
    try:
        return handler(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except _NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
