import numpy as np
import pytest

from slidegar.corpus_graph import SENTINEL, CorpusGraph, build_graph_dense
from slidegar.corpus_store import (
    CorpusStore,
    Document,
    grades_by_docno,
    ingest_corpus,
    load_qrels,
    load_queries,
    map_qrels,
)
from slidegar.dense_index import load_embeddings
from slidegar.lexical_index import build_index
from slidegar.synth import SynthSpec, generate


def make_store(docs: dict[str, str]) -> CorpusStore:
    store = CorpusStore()
    for docno, text in docs.items():
        store.add(Document(docno, text))
    return store


def graph_from_dict(adjacency: dict[str, list[str]], names: list[str], k: int) -> CorpusGraph:
    """Hand-built graph over docnos; absent slots stay sentinel."""
    ids = {name: i for i, name in enumerate(names)}
    rows = np.full((len(names), k), SENTINEL, dtype=np.uint32)
    for name, nbs in adjacency.items():
        for slot, nb in enumerate(nbs):
            rows[ids[name], slot] = ids[nb]
    return CorpusGraph(k, rows, names, "dense")


class SynthBundle:
    """Everything the quantitative tests need, built once per session."""

    def __init__(self, out_dir):
        self.dir = out_dir
        self.spec = SynthSpec(seed=7)
        self.manifest = generate(self.spec, out_dir)
        self.store, _ = ingest_corpus(out_dir / "corpus.tsv")
        self.index = build_index(self.store)
        self.table = load_embeddings(out_dir / "embeddings.bin", self.store)
        self.graph = build_graph_dense(self.table, 16)
        self.queries = load_queries(out_dir / "queries.tsv")
        entries = load_qrels(out_dir / "qrels.txt")
        table, absent = map_qrels(entries, self.store)
        assert not absent
        self.grades = grades_by_docno(table, self.store)
        self.by_qid = {info["qid"]: info for info in self.manifest["queries"]}


@pytest.fixture(scope="session")
def synth_bundle(tmp_path_factory) -> SynthBundle:
    return SynthBundle(tmp_path_factory.mktemp("synthdata"))
