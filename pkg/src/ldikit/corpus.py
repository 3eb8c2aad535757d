"""Test-collection ingestion: markup parsing, tokenization, vocabulary, counts.

Collections arrive as three plain-text files (documents, queries, relevance
judgments) in the dotted-marker record format used by the classic retrieval
test collections.  This module turns them into an in-memory `Corpus`: a
term-document count matrix over a fixed vocabulary, query count vectors over
the same vocabulary, and a judged-relevance map.
"""

from __future__ import annotations

import csv
import hashlib
import json
import re
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

FORMAT_VERSION = 1
TOKENIZER_VERSION = 1


class ParseError(ValueError):
    """Malformed collection file; carries the 1-based offending line number."""

    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class RawDocument:
    doc_id: int
    title: str
    body: str
    source: str = ""

    @property
    def text(self) -> str:
        """Indexed text: title and body; other record sections never index."""
        return (self.title + "\n" + self.body).strip()


@dataclass(frozen=True)
class Query:
    query_id: int
    text: str
    source: str = ""


# ---------------------------------------------------------------------------
# Dotted-marker record parsing

_MARKER_RE = re.compile(r"^\.([A-Z])(?:\s+(.*))?$")

# Sections that exist in the classic files.  Only .T and .W contribute
# indexed text; .A and .B are recognized metadata, .X and .N are noise.
_KNOWN_SECTIONS = frozenset("ITABWXN")
_TEXT_SECTIONS = {"T": "title", "W": "body"}


def _iter_lines(source) -> Iterable[str]:
    if isinstance(source, str):
        return source.splitlines()
    if isinstance(source, Path):
        return source.read_text(errors="replace").splitlines()
    return (line.rstrip("\n") for line in source)


def _parse_records(source, source_tag: str):
    """Yield (doc_id, sections, line_no) for each .I record in the stream."""
    doc_id = None
    start_line = 0
    sections: dict[str, list[str]] = {}
    current: str | None = None

    def flush():
        if doc_id is not None:
            yield doc_id, sections, start_line

    for line_no, line in enumerate(_iter_lines(source), 1):
        m = _MARKER_RE.match(line)
        if m:
            tag, rest = m.group(1), m.group(2)
            if tag == "I":
                yield from flush()
                if rest is None or not rest.strip():
                    raise ParseError("record marker .I without an id", line_no)
                try:
                    doc_id = int(rest.strip())
                except ValueError:
                    raise ParseError(
                        f"record id {rest.strip()!r} is not an integer", line_no
                    ) from None
                start_line = line_no
                sections = {}
                current = None
                continue
            if doc_id is None:
                raise ParseError(
                    f"section marker .{tag} before the first .I record", line_no
                )
            if tag not in _KNOWN_SECTIONS:
                warnings.warn(
                    f"{source_tag}: unknown section marker .{tag} "
                    f"at line {line_no}; section ignored",
                    stacklevel=3,
                )
            current = tag
            if rest and rest.strip() and tag in _TEXT_SECTIONS:
                sections.setdefault(tag, []).append(rest)
            continue
        if current in _TEXT_SECTIONS:
            sections.setdefault(current, []).append(line)
    yield from flush()


def parse_documents(source, source_tag: str = "") -> list[RawDocument]:
    """Parse a document file into RawDocuments.

    Records begin at ``.I <id>``; ``.T`` and ``.W`` sections supply the
    indexed text, ``.A``/``.B`` are recognized but not indexed, ``.X``/``.N``
    are ignored.  Duplicate ids within one file are an error.
    """
    docs: list[RawDocument] = []
    seen: set[int] = set()
    for doc_id, sections, line_no in _parse_records(source, source_tag or "documents"):
        if doc_id in seen:
            raise ParseError(f"duplicate document id {doc_id}", line_no)
        seen.add(doc_id)
        title = "\n".join(sections.get("T", [])).strip()
        body = "\n".join(sections.get("W", [])).strip()
        docs.append(RawDocument(doc_id=doc_id, title=title, body=body, source=source_tag))
    return docs


def parse_queries(source, source_tag: str = "") -> list[Query]:
    """Parse a query file; query text comes from .W (falling back to .T)."""
    queries: list[Query] = []
    seen: set[int] = set()
    for query_id, sections, line_no in _parse_records(source, source_tag or "queries"):
        if query_id in seen:
            raise ParseError(f"duplicate query id {query_id}", line_no)
        seen.add(query_id)
        text = "\n".join(sections.get("W", [])).strip()
        if not text:
            text = "\n".join(sections.get("T", [])).strip()
        queries.append(Query(query_id=query_id, text=text, source=source_tag))
    return queries


def parse_qrels(source, dialect: str = "auto") -> dict[int, set[int]]:
    """Parse relevance judgments into {query_id: {doc_id, ...}}.

    Two whitespace-separated layouts exist in the wild:

    - ``pair``: document id in column 2 (query id, doc id, extras...)
    - ``trec``: constant 0 in column 2, document id in column 3

    ``auto`` picks ``trec`` when every row's column 2 equals 0.
    """
    rows: list[tuple[int, list[str]]] = []
    for line_no, line in enumerate(_iter_lines(source), 1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) < 2:
            raise ParseError("judgment row needs at least two columns", line_no)
        rows.append((line_no, parts))
    if not rows:
        return {}

    if dialect == "auto":
        def col2_zero(parts: list[str]) -> bool:
            return len(parts) >= 3 and parts[1] == "0"

        dialect = "trec" if all(col2_zero(p) for _, p in rows) else "pair"
    if dialect not in ("pair", "trec"):
        raise ValueError(f"unknown qrels dialect {dialect!r}")

    doc_col = 2 if dialect == "trec" else 1
    qrels: dict[int, set[int]] = {}
    for line_no, parts in rows:
        if len(parts) <= doc_col:
            raise ParseError(
                f"judgment row too short for {dialect!r} layout", line_no
            )
        try:
            qid = int(parts[0])
            did = int(parts[doc_col])
        except ValueError:
            raise ParseError("judgment ids must be integers", line_no) from None
        qrels.setdefault(qid, set()).add(did)
    return qrels


# ---------------------------------------------------------------------------
# Tokenization and stoplisting

_STRIP_RE = re.compile(r"[^a-z0-9\s]+")


def tokenize(text: str) -> list[str]:
    """Lowercase, delete punctuation in place, split, drop short/numeric tokens.

    Deleting (not blanking) punctuation keeps hyphenated and apostrophized
    forms as single tokens: "don't" -> "dont", "x-ray" -> "xray".
    """
    cleaned = _STRIP_RE.sub("", text.lower())
    return [t for t in cleaned.split() if len(t) >= 2 and not t.isdigit()]


class StopList:
    """Lowercase stop terms; matching also covers tokenizer-normalized forms.

    Entries are stored verbatim, but membership tests accept the form the
    tokenizer would emit ("don't" stops the token "dont").
    """

    def __init__(self, terms: Iterable[str]):
        self.terms = frozenset(t.strip().lower() for t in terms if t.strip())
        matchable = set(self.terms)
        for term in self.terms:
            matchable.update(tokenize(term))
        self._matchable = frozenset(matchable)

    def __contains__(self, token: str) -> bool:
        return token in self._matchable

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self):
        return iter(sorted(self.terms))


def smart_stoplist() -> StopList:
    """The bundled 571-term stoplist used by the classic retrieval systems."""
    text = resources.files("ldikit.data").joinpath("smart_stopwords.txt").read_text()
    stop = StopList(text.splitlines())
    if len(stop) != 571:
        raise RuntimeError(f"bundled stoplist has {len(stop)} terms, expected 571")
    return stop


def load_stoplist(path) -> StopList:
    return StopList(Path(path).read_text().splitlines())


# ---------------------------------------------------------------------------
# Vocabulary and counts

@dataclass
class Vocabulary:
    """Fixed term list; index order is first occurrence in the corpus."""

    terms: list[str]
    index: dict[str, int]
    df: np.ndarray
    cf: np.ndarray

    def __len__(self) -> int:
        return len(self.terms)

    def __contains__(self, term: str) -> bool:
        return term in self.index

    def __getitem__(self, term: str) -> int:
        return self.index[term]


def _as_tokens(doc) -> list[str]:
    if isinstance(doc, RawDocument):
        return tokenize(doc.text)
    if isinstance(doc, str):
        return tokenize(doc)
    return list(doc)


def build_vocabulary(docs: Sequence, stoplist: StopList | None = None) -> Vocabulary:
    """Build the vocabulary: tokens minus stop terms minus singletons.

    A term must occur at least twice across the whole corpus to enter the
    vocabulary.  Index order is first occurrence among surviving terms.
    """
    cf: dict[str, int] = {}
    df: dict[str, int] = {}
    for doc in docs:
        seen: set[str] = set()
        for tok in _as_tokens(doc):
            if stoplist is not None and tok in stoplist:
                continue
            cf[tok] = cf.get(tok, 0) + 1
            if tok not in seen:
                seen.add(tok)
                df[tok] = df.get(tok, 0) + 1
    terms = [t for t, c in cf.items() if c >= 2]
    if not terms:
        raise ValueError("vocabulary is empty after preprocessing")
    index = {t: j for j, t in enumerate(terms)}
    return Vocabulary(
        terms=terms,
        index=index,
        df=np.array([df[t] for t in terms], dtype=np.int64),
        cf=np.array([cf[t] for t in terms], dtype=np.int64),
    )


@dataclass
class TermDocCounts:
    """Sparse document-term count matrix plus per-document token totals."""

    matrix: sp.csr_matrix
    doc_lengths: np.ndarray

    @property
    def n_docs(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_terms(self) -> int:
        return self.matrix.shape[1]


def count_matrix(docs: Sequence, vocab: Vocabulary) -> TermDocCounts:
    """Count in-vocabulary tokens per document.  Rows may be empty."""
    data: list[int] = []
    indices: list[int] = []
    indptr = [0]
    for doc in docs:
        row: dict[int, int] = {}
        for tok in _as_tokens(doc):
            j = vocab.index.get(tok)
            if j is not None:
                row[j] = row.get(j, 0) + 1
        for j in sorted(row):
            indices.append(j)
            data.append(row[j])
        indptr.append(len(indices))
    matrix = sp.csr_matrix(
        (np.array(data, dtype=np.int64), np.array(indices, dtype=np.int32),
         np.array(indptr, dtype=np.int64)),
        shape=(len(docs), len(vocab)),
    )
    lengths = np.asarray(matrix.sum(axis=1)).ravel().astype(np.int64)
    return TermDocCounts(matrix=matrix, doc_lengths=lengths)


# ---------------------------------------------------------------------------
# Collections and corpora

@dataclass
class Collection:
    """One parsed test collection: raw documents, queries, judgments."""

    name: str
    documents: list[RawDocument]
    queries: list[Query]
    qrels: dict[int, set[int]] = field(default_factory=dict)


def merge_collections(collections: Sequence[Collection], name: str = "merged") -> Collection:
    """Concatenate collections, offsetting ids so they stay globally unique.

    Document and query ids are offset independently by the running maximum of
    the collections already merged; judgments are remapped accordingly.
    """
    docs: list[RawDocument] = []
    queries: list[Query] = []
    qrels: dict[int, set[int]] = {}
    doc_offset = 0
    query_offset = 0
    for coll in collections:
        for d in coll.documents:
            docs.append(RawDocument(
                doc_id=d.doc_id + doc_offset, title=d.title, body=d.body,
                source=d.source or coll.name,
            ))
        for q in coll.queries:
            queries.append(Query(
                query_id=q.query_id + query_offset, text=q.text,
                source=q.source or coll.name,
            ))
        for qid, dids in coll.qrels.items():
            qrels[qid + query_offset] = {d + doc_offset for d in dids}
        doc_offset += max((d.doc_id for d in coll.documents), default=0)
        query_offset += max((q.query_id for q in coll.queries), default=0)
    return Collection(name=name, documents=docs, queries=queries, qrels=qrels)


def validate_qrels(collection: Collection) -> list[str]:
    """Report judgment pairs whose ids resolve to no parsed document/query."""
    doc_ids = {d.doc_id for d in collection.documents}
    query_ids = {q.query_id for q in collection.queries}
    problems = []
    for qid in sorted(collection.qrels):
        if qid not in query_ids:
            problems.append(f"judgments for unknown query {qid}")
        for did in sorted(collection.qrels[qid]):
            if did not in doc_ids:
                problems.append(f"query {qid}: judged document {did} not parsed")
    return problems


@dataclass
class Corpus:
    """A processed collection: counts over a fixed vocabulary plus queries."""

    name: str
    doc_ids: np.ndarray
    query_ids: np.ndarray
    vocabulary: Vocabulary
    counts: TermDocCounts
    query_counts: sp.csr_matrix
    qrels: dict[int, set[int]]
    dropped_judgments: list[str] = field(default_factory=list)

    @property
    def n_docs(self) -> int:
        return self.counts.n_docs

    @property
    def n_terms(self) -> int:
        return len(self.vocabulary)

    @property
    def n_queries(self) -> int:
        return len(self.query_ids)

    def doc_row(self, doc_id: int) -> int:
        rows = np.nonzero(self.doc_ids == doc_id)[0]
        if len(rows) == 0:
            raise KeyError(f"unknown document id {doc_id}")
        return int(rows[0])

    def checksum(self) -> str:
        """Content hash covering vocabulary, counts, queries and judgments."""
        h = hashlib.sha256()
        h.update("\n".join(self.vocabulary.terms).encode())
        h.update(self.doc_ids.tobytes())
        h.update(self.query_ids.tobytes())
        for m in (self.counts.matrix, self.query_counts):
            m = m.tocsr()
            h.update(m.indptr.tobytes())
            h.update(m.indices.tobytes())
            h.update(np.asarray(m.data, dtype=np.int64).tobytes())
        for qid in sorted(self.qrels):
            h.update(f"{qid}:{sorted(self.qrels[qid])}".encode())
        return h.hexdigest()


def build_corpus(collection: Collection, stoplist: StopList | None = None) -> Corpus:
    """Tokenize, build vocabulary from the documents, count docs and queries.

    Judged pairs pointing at unparsed documents are reported through a
    warning and recorded on the corpus, then excluded from evaluation.
    """
    vocab = build_vocabulary(collection.documents, stoplist)
    counts = count_matrix(collection.documents, vocab)
    query_counts = count_matrix([q.text for q in collection.queries], vocab).matrix

    problems = validate_qrels(collection)
    if problems:
        warnings.warn(
            f"{collection.name}: {len(problems)} judgment problem(s); "
            "offending pairs excluded from evaluation "
            f"(first: {problems[0]})",
            stacklevel=2,
        )
    doc_ids = {d.doc_id for d in collection.documents}
    query_ids = {q.query_id for q in collection.queries}
    qrels = {}
    for qid, dids in collection.qrels.items():
        if qid not in query_ids:
            continue
        kept = {d for d in dids if d in doc_ids}
        if kept:
            qrels[qid] = kept
    return Corpus(
        name=collection.name,
        doc_ids=np.array([d.doc_id for d in collection.documents], dtype=np.int64),
        query_ids=np.array([q.query_id for q in collection.queries], dtype=np.int64),
        vocabulary=vocab,
        counts=counts,
        query_counts=query_counts,
        qrels=qrels,
        dropped_judgments=problems,
    )


def query_count_vector(tokens: Sequence[str], vocab: Vocabulary) -> np.ndarray:
    """Dense in-vocabulary count vector for one token list."""
    vec = np.zeros(len(vocab), dtype=np.int64)
    for tok in tokens:
        j = vocab.index.get(tok)
        if j is not None:
            vec[j] += 1
    return vec


# ---------------------------------------------------------------------------
# Corpus bundle persistence

def save_corpus(corpus: Corpus, out_dir) -> Path:
    """Write a corpus bundle: manifest, vocabulary, count and judgment CSVs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    (out / "vocabulary.txt").write_text("\n".join(corpus.vocabulary.terms) + "\n")

    def write_counts(path: Path, matrix: sp.csr_matrix, row_ids: np.ndarray,
                     row_col: str) -> None:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([row_col, "term", "count"])
            coo = matrix.tocoo()
            order = np.lexsort((coo.col, coo.row))
            for i in order:
                writer.writerow([int(row_ids[coo.row[i]]), int(coo.col[i]),
                                 int(coo.data[i])])

    write_counts(out / "counts.csv", corpus.counts.matrix, corpus.doc_ids, "doc")
    write_counts(out / "queries.csv", corpus.query_counts, corpus.query_ids, "query")

    with (out / "qrels.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["query", "doc"])
        for qid in sorted(corpus.qrels):
            for did in sorted(corpus.qrels[qid]):
                writer.writerow([qid, did])

    manifest = {
        "format_version": FORMAT_VERSION,
        "tokenizer_version": TOKENIZER_VERSION,
        "name": corpus.name,
        "n_docs": corpus.n_docs,
        "n_queries": corpus.n_queries,
        "n_terms": corpus.n_terms,
        "doc_ids": corpus.doc_ids.tolist(),
        "query_ids": corpus.query_ids.tolist(),
        "dropped_judgments": corpus.dropped_judgments,
        "checksum": corpus.checksum(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return out


def load_corpus(in_dir) -> Corpus:
    """Load a corpus bundle written by save_corpus; verifies the checksum."""
    src = Path(in_dir)
    manifest = json.loads((src / "manifest.json").read_text())
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ValueError(
            f"unsupported corpus format version {manifest.get('format_version')}"
        )
    terms = (src / "vocabulary.txt").read_text().splitlines()
    doc_ids = np.array(manifest["doc_ids"], dtype=np.int64)
    query_ids = np.array(manifest["query_ids"], dtype=np.int64)

    def read_counts(path: Path, row_ids: np.ndarray) -> sp.csr_matrix:
        row_of = {int(r): i for i, r in enumerate(row_ids)}
        rows, cols, vals = [], [], []
        with path.open() as fh:
            reader = csv.reader(fh)
            next(reader)
            for rec in reader:
                rows.append(row_of[int(rec[0])])
                cols.append(int(rec[1]))
                vals.append(int(rec[2]))
        return sp.csr_matrix(
            (np.array(vals, dtype=np.int64), (rows, cols)),
            shape=(len(row_ids), len(terms)),
        )

    matrix = read_counts(src / "counts.csv", doc_ids)
    query_counts = read_counts(src / "queries.csv", query_ids)

    qrels: dict[int, set[int]] = {}
    with (src / "qrels.csv").open() as fh:
        reader = csv.reader(fh)
        next(reader)
        for rec in reader:
            qrels.setdefault(int(rec[0]), set()).add(int(rec[1]))

    # df/cf are derivable from the counts, so the bundle does not store them.
    df = np.asarray((matrix > 0).sum(axis=0)).ravel().astype(np.int64)
    cf = np.asarray(matrix.sum(axis=0)).ravel().astype(np.int64)
    vocab = Vocabulary(terms=terms, index={t: j for j, t in enumerate(terms)},
                       df=df, cf=cf)
    corpus = Corpus(
        name=manifest["name"],
        doc_ids=doc_ids,
        query_ids=query_ids,
        vocabulary=vocab,
        counts=TermDocCounts(
            matrix=matrix,
            doc_lengths=np.asarray(matrix.sum(axis=1)).ravel().astype(np.int64),
        ),
        query_counts=query_counts,
        qrels=qrels,
        dropped_judgments=list(manifest.get("dropped_judgments", [])),
    )
    stored = manifest.get("checksum")
    if stored and corpus.checksum() != stored:
        raise ValueError("corpus bundle checksum mismatch")
    return corpus


def load_collection(doc_path, query_path=None, qrels_path=None,
                    name: str | None = None, qrels_dialect: str = "auto") -> Collection:
    """Read the three collection files from disk into a Collection."""
    doc_path = Path(doc_path)
    tag = name or doc_path.stem
    docs = parse_documents(doc_path, tag)
    queries = parse_queries(Path(query_path), tag) if query_path else []
    qrels = parse_qrels(Path(qrels_path), qrels_dialect) if qrels_path else {}
    return Collection(name=tag, documents=docs, queries=queries, qrels=qrels)
