"""On-disk formats for fitted models and score matrices.

A model bundle is a directory: ``manifest.json`` plus one raw array file
per named array, little-endian, C-order.  Sparse matrices expand to their
three component arrays.  A score matrix is a single file: one JSON header
line, then the raw float64 scores; a ``.csv`` path gets a plain CSV
instead.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .ensemble import ScoreMatrix

BUNDLE_VERSION = 1

_DTYPE_TAGS = {"<f8": np.dtype("<f8"), "<i8": np.dtype("<i8")}


def _write_array(path: Path, array: np.ndarray) -> dict:
    array = np.ascontiguousarray(array)
    if array.dtype.kind == "f":
        array = array.astype("<f8")
    elif array.dtype.kind in "iub":
        array = array.astype("<i8")
    else:
        raise TypeError(f"cannot persist array of dtype {array.dtype}")
    path.write_bytes(array.tobytes())
    return {"file": path.name, "shape": list(array.shape),
            "dtype": array.dtype.str}


def save_model(out_dir, kind: str, manifest: dict, arrays: dict) -> Path:
    """Write a model bundle.  ``arrays`` values are dense arrays or CSR
    matrices; everything else belongs in ``manifest``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = {}
    for name, value in arrays.items():
        if sp.issparse(value):
            csr = value.tocsr()
            entries[name] = {
                "sparse": "csr",
                "shape": list(csr.shape),
                "data": _write_array(out / f"{name}.data.bin", csr.data),
                "indices": _write_array(out / f"{name}.indices.bin", csr.indices),
                "indptr": _write_array(out / f"{name}.indptr.bin", csr.indptr),
            }
        else:
            entries[name] = _write_array(out / f"{name}.bin", np.asarray(value))
    doc = {"bundle_version": BUNDLE_VERSION, "kind": kind,
           **manifest, "arrays": entries}
    (out / "manifest.json").write_text(json.dumps(doc, indent=1))
    return out


def _read_array(src: Path, entry: dict) -> np.ndarray:
    dtype = _DTYPE_TAGS[entry["dtype"]]
    raw = np.frombuffer((src / entry["file"]).read_bytes(), dtype=dtype)
    return raw.reshape(entry["shape"]).copy()


def load_model(in_dir):
    """Read a model bundle back as (manifest, arrays)."""
    src = Path(in_dir)
    doc = json.loads((src / "manifest.json").read_text())
    if doc.get("bundle_version") != BUNDLE_VERSION:
        raise ValueError(f"unsupported bundle version {doc.get('bundle_version')}")
    arrays = {}
    for name, entry in doc.pop("arrays").items():
        if entry.get("sparse") == "csr":
            arrays[name] = sp.csr_matrix(
                (_read_array(src, entry["data"]),
                 _read_array(src, entry["indices"]),
                 _read_array(src, entry["indptr"])),
                shape=entry["shape"])
        else:
            arrays[name] = _read_array(src, entry)
    return doc, arrays


def save_scores(path, matrix: ScoreMatrix) -> Path:
    """One file: JSON header line then raw float64 scores (CSV if .csv)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".csv":
        with path.open("w") as fh:
            fh.write("query," + ",".join(str(d) for d in matrix.doc_ids) + "\n")
            for qid, row in zip(matrix.query_ids, matrix.scores):
                fh.write(str(int(qid)) + "," +
                         ",".join(repr(float(v)) for v in row) + "\n")
        return path
    header = {
        "bundle_version": BUNDLE_VERSION,
        "tag": matrix.tag,
        "query_ids": matrix.query_ids.tolist(),
        "doc_ids": matrix.doc_ids.tolist(),
        "dtype": "<f8",
    }
    with path.open("wb") as fh:
        fh.write(json.dumps(header).encode() + b"\n")
        fh.write(np.ascontiguousarray(matrix.scores.astype("<f8")).tobytes())
    return path


def load_scores(path) -> ScoreMatrix:
    path = Path(path)
    if path.suffix == ".csv":
        with path.open() as fh:
            header = fh.readline().rstrip("\n").split(",")
            doc_ids = np.array([int(d) for d in header[1:]], dtype=np.int64)
            query_ids = []
            rows = []
            for line in fh:
                parts = line.rstrip("\n").split(",")
                query_ids.append(int(parts[0]))
                rows.append([float(v) for v in parts[1:]])
        return ScoreMatrix(tag=path.stem, scores=np.array(rows),
                           query_ids=np.array(query_ids, dtype=np.int64),
                           doc_ids=doc_ids)
    with path.open("rb") as fh:
        header = json.loads(fh.readline().decode())
        if header.get("bundle_version") != BUNDLE_VERSION:
            raise ValueError("unsupported score file version")
        query_ids = np.array(header["query_ids"], dtype=np.int64)
        doc_ids = np.array(header["doc_ids"], dtype=np.int64)
        raw = np.frombuffer(fh.read(), dtype=_DTYPE_TAGS[header["dtype"]])
    scores = raw.reshape(len(query_ids), len(doc_ids)).copy()
    return ScoreMatrix(tag=header["tag"], scores=scores,
                       query_ids=query_ids, doc_ids=doc_ids)
