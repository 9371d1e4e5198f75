"""Precomputed-embedding store and exact inner-product retrieval.

Embedding file format: one JSON header line
``{"dim": D, "count": N, "normalized": bool}`` followed by N binary records
``u32 docno_length | docno utf-8 bytes | D little-endian f32``.

Vectors are ingested, never computed here; similarity is the inner product.
Cosine behaviour is available by normalizing at load time.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .corpus_store import CorpusStore, Query
from .ranking import Ranking, ScoredDoc


class EmbeddingTable:
    """Dense vectors aligned with store doc ids (row i belongs to doc id i)."""

    def __init__(self, matrix: np.ndarray, docnos: list[str], normalized: bool = False) -> None:
        if matrix.ndim != 2 or matrix.shape[0] != len(docnos):
            raise ValueError("matrix must be (n_docs, dim) and match docnos")
        self.matrix = matrix.astype(np.float32, copy=False)
        self.docnos = docnos
        self.normalized = normalized
        self._ids = {docno: i for i, docno in enumerate(docnos)}

    def __len__(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    def doc_id(self, docno: str) -> int:
        try:
            return self._ids[docno]
        except KeyError:
            raise KeyError(f"docno {docno!r} not in embedding table") from None

    def vector(self, docno: str) -> np.ndarray:
        return self.matrix[self.doc_id(docno)]


def write_embeddings(
    path: str | Path,
    dim: int,
    records: Iterable[tuple[str, Iterable[float]]],
    normalized: bool = False,
) -> int:
    """Write records to the binary embedding format; returns the count."""
    rows = [(docno, np.asarray(vec, dtype="<f4")) for docno, vec in records]
    for docno, vec in rows:
        if vec.shape != (dim,):
            raise ValueError(f"vector for {docno!r} has shape {vec.shape}, expected ({dim},)")
    header = {"dim": dim, "count": len(rows), "normalized": bool(normalized)}
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for docno, vec in rows:
            encoded = docno.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(vec.tobytes())
    return len(rows)


def _iter_records(path: str | Path) -> tuple[dict, Iterator[tuple[int, str, np.ndarray]]]:
    f = open(path, "rb")
    header_line = f.readline()
    try:
        header = json.loads(header_line.decode("utf-8"))
        dim, count = int(header["dim"]), int(header["count"])
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        f.close()
        raise ValueError(f"{path}: invalid embedding header ({exc})") from None
    if dim < 1 or count < 0:
        f.close()
        raise ValueError(f"{path}: invalid embedding header values dim={dim} count={count}")

    def generate() -> Iterator[tuple[int, str, np.ndarray]]:
        try:
            vec_bytes = 4 * dim
            for record_idx in range(1, count + 1):
                len_raw = f.read(4)
                if len(len_raw) != 4:
                    raise ValueError(f"{path}: record {record_idx}: truncated file")
                (docno_len,) = struct.unpack("<I", len_raw)
                docno_raw = f.read(docno_len)
                vec_raw = f.read(vec_bytes)
                if len(docno_raw) != docno_len or len(vec_raw) != vec_bytes:
                    raise ValueError(f"{path}: record {record_idx}: truncated file")
                docno = docno_raw.decode("utf-8")
                vector = np.frombuffer(vec_raw, dtype="<f4")
                if not np.all(np.isfinite(vector)):
                    raise ValueError(f"{path}: record {record_idx}: non-finite value for docno {docno!r}")
                yield record_idx, docno, vector
            if f.read(1):
                raise ValueError(f"{path}: trailing bytes after {count} records")
        finally:
            f.close()

    return header, generate()


def load_embeddings(path: str | Path, store: CorpusStore, normalize: bool = False) -> EmbeddingTable:
    """Load and validate vectors for every store document.

    Fatal on: a record whose docno is unknown to the store, a duplicate
    record, a non-finite component (all reported with the record index), and
    on any store document the file does not cover (reported by docno).
    """
    header, records = _iter_records(path)
    dim = int(header["dim"])
    matrix = np.zeros((len(store), dim), dtype=np.float32)
    filled = np.zeros(len(store), dtype=bool)
    for record_idx, docno, vector in records:
        if docno not in store:
            raise ValueError(f"{path}: record {record_idx}: docno {docno!r} not in store")
        doc_id = store.doc_id(docno)
        if filled[doc_id]:
            raise ValueError(f"{path}: record {record_idx}: duplicate docno {docno!r}")
        matrix[doc_id] = vector
        filled[doc_id] = True
    if not filled.all():
        missing = store.docno(int(np.flatnonzero(~filled)[0]))
        raise ValueError(f"{path}: no vector for store docno {missing!r}")
    normalized = bool(header.get("normalized", False))
    if normalize:
        norms = np.linalg.norm(matrix, axis=1)
        if np.any(norms == 0):
            zero = store.docno(int(np.flatnonzero(norms == 0)[0]))
            raise ValueError(f"{path}: zero vector for docno {zero!r} cannot be normalized")
        matrix = matrix / norms[:, None]
        normalized = True
    return EmbeddingTable(matrix, store.docnos, normalized=normalized)


def load_query_embeddings(path: str | Path, queries: list[Query]) -> dict[str, np.ndarray]:
    """Load query vectors (qid stored in the docno slot); every query must be covered."""
    _, records = _iter_records(path)
    vectors = {qid: vec for _, qid, vec in records}
    for query in queries:
        if query.qid not in vectors:
            raise ValueError(f"{path}: no vector for qid {query.qid!r}")
    return vectors


def dense_retrieve(table: EmbeddingTable, query_vector: np.ndarray, k: int) -> Ranking:
    """Exact top-k by inner product over all documents; ties by doc id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    query = np.asarray(query_vector, dtype=np.float32)
    if query.shape != (table.dim,):
        raise ValueError(f"query vector has shape {query.shape}, table dim is {table.dim}")
    scores = table.matrix @ query
    order = np.argsort(-scores, kind="stable")[:k]
    return [ScoredDoc(table.docnos[i], float(scores[i])) for i in order]
