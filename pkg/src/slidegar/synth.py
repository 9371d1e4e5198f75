"""Deterministic synthetic collections for quantitative tests.

Generated corpora follow the clustering structure real collections exhibit:
documents sample from a private per-cluster vocabulary, each query targets
one cluster, and a configurable fraction of its relevant documents is
lexically hidden -- zero term overlap with the query -- while staying inside
the cluster's embedding neighbourhood. Hidden documents share "paraphrase"
topic terms with the visible relevant ones (never random noise), so both
dense graphs and feedback-driven expansion can reach them, but term-matching
retrieval provably cannot.

To give first-stage retrieval a realistically full pool, a partition of
other-cluster documents ("distractors") carries a single low-frequency
occurrence of one query term each.

Emitted files: ``corpus.tsv``, ``queries.tsv``, ``qrels.txt``,
``embeddings.bin``, ``query_embeddings.bin``, and a ``spec.json`` provenance
record (which also carries the per-query ground truth used by tests).
All randomness flows from one seed through a fixed generator
(``python-random-mt19937``), so the same spec yields byte-identical files.
"""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass
from pathlib import Path

from .dense_index import write_embeddings

RNG_ID = "python-random-mt19937"

CENTROID_SCALE = 10.0
RELEVANT_OFFSET = 1.0
NOISE_STD = 0.02

QUERY_TERMS = 3
TOPIC_TERMS = 5
EXTRA_DISTRACTORS = 10  # distractors per query = relevant_per_query + this


@dataclass(frozen=True)
class SynthSpec:
    n_clusters: int = 6
    docs_per_cluster: int = 85
    vocab_per_cluster: int = 40
    shared_vocab: int = 15
    dim: int = 32
    n_queries: int = 6
    relevant_per_query: int = 10
    retrieval_gap: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        counts = {
            "n_clusters": self.n_clusters,
            "docs_per_cluster": self.docs_per_cluster,
            "vocab_per_cluster": self.vocab_per_cluster,
            "shared_vocab": self.shared_vocab,
            "dim": self.dim,
            "n_queries": self.n_queries,
            "relevant_per_query": self.relevant_per_query,
        }
        for name, value in counts.items():
            if value < 1:
                raise ValueError(f"{name} must be >= 1, got {value}")
        if not 0.0 <= self.retrieval_gap < 1.0:
            raise ValueError("retrieval_gap must be in [0, 1)")
        if self.n_queries > self.n_clusters:
            raise ValueError("need n_queries <= n_clusters (one target cluster per query)")
        if self.dim < self.n_clusters + self.n_queries:
            raise ValueError(
                "dim must be >= n_clusters + n_queries so cluster centroids and "
                "relevant-group offsets can occupy orthogonal axes"
            )
        if self.relevant_per_query > self.docs_per_cluster:
            raise ValueError("relevant_per_query cannot exceed docs_per_cluster")
        if self.vocab_per_cluster < 10 or self.shared_vocab < 2:
            raise ValueError(
                "cluster vocabulary too small for document composition "
                "(need vocab_per_cluster >= 10 and shared_vocab >= 2)"
            )


def generate(spec: SynthSpec, out_dir: str | Path) -> dict:
    """Write the collection to ``out_dir`` and return the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(spec.seed)

    shared = [f"sh{j}" for j in range(spec.shared_vocab)]
    general = [[f"c{ci}g{j}" for j in range(spec.vocab_per_cluster)] for ci in range(spec.n_clusters)]
    qterms = [[f"q{qi}k{j}" for j in range(QUERY_TERMS)] for qi in range(spec.n_queries)]
    topics = [[f"q{qi}p{j}" for j in range(TOPIC_TERMS)] for qi in range(spec.n_queries)]

    n_hidden = int(spec.retrieval_gap * spec.relevant_per_query + 0.5)
    n_near = min(spec.relevant_per_query, spec.docs_per_cluster - spec.relevant_per_query)

    docnos: list[list[str]] = [
        [f"d{ci:02d}x{j:04d}" for j in range(spec.docs_per_cluster)] for ci in range(spec.n_clusters)
    ]
    tokens: dict[str, list[str]] = {}
    cluster_of: dict[str, int] = {}
    queries_info: list[dict] = []
    plain_pool: list[str] = []

    for ci in range(spec.n_clusters):
        has_query = ci < spec.n_queries
        hidden = docnos[ci][:n_hidden] if has_query else []
        visible = docnos[ci][n_hidden : spec.relevant_per_query] if has_query else []
        near = docnos[ci][spec.relevant_per_query : spec.relevant_per_query + n_near] if has_query else []
        plain_start = spec.relevant_per_query + n_near if has_query else 0
        plain = docnos[ci][plain_start:]
        for docno in hidden:
            tokens[docno] = rng.sample(topics[ci], 4) + rng.sample(general[ci], 6) + [docno]
        for docno in visible:
            doubled = [term for term in qterms[ci] for _ in range(2)]
            tokens[docno] = doubled + rng.sample(topics[ci], 3) + [docno]
        for docno in near:
            tokens[docno] = rng.sample(general[ci], 10) + [docno]
        for docno in plain:
            tokens[docno] = rng.sample(general[ci], 8) + rng.sample(shared, 2) + [docno]
        for docno in docnos[ci]:
            cluster_of[docno] = ci
        plain_pool.extend(plain)
        if has_query:
            queries_info.append(
                {
                    "qid": f"q{ci}",
                    "cluster": ci,
                    "query_terms": qterms[ci],
                    "topic_terms": topics[ci],
                    "hidden": hidden,
                    "visible": visible,
                    "near_misses": near,
                    "distractors": [],
                }
            )

    # Distractors: disjoint slices of other-cluster plain docs, each carrying
    # one query-term occurrence so BM25 fills the pool past the visible docs.
    assigned: set[str] = set()
    quota = spec.relevant_per_query + EXTRA_DISTRACTORS
    for info in queries_info:
        taken = 0
        for docno in plain_pool:
            if taken >= quota:
                break
            if docno in assigned or cluster_of[docno] == info["cluster"]:
                continue
            assigned.add(docno)
            tokens[docno] = tokens[docno] + [info["query_terms"][taken % QUERY_TERMS]]
            info["distractors"].append(docno)
            taken += 1

    all_docnos = [docno for per_cluster in docnos for docno in per_cluster]
    with open(out / "corpus.tsv", "w", encoding="utf-8") as f:
        for docno in all_docnos:
            f.write(f"{docno}\t{' '.join(tokens[docno])}\n")

    with open(out / "queries.tsv", "w", encoding="utf-8") as f:
        for info in queries_info:
            f.write(f"{info['qid']}\t{' '.join(info['query_terms'])}\n")

    with open(out / "qrels.txt", "w", encoding="utf-8") as f:
        for info in queries_info:
            for docno in info["hidden"] + info["visible"]:
                f.write(f"{info['qid']} 0 {docno} 2\n")
            for docno in info["near_misses"]:
                f.write(f"{info['qid']} 0 {docno} 1\n")

    # Embeddings: orthogonal cluster centroids; the relevant documents of a
    # query share an extra orthogonal offset so they are each other's nearest
    # neighbours; small per-dimension noise keeps vectors distinct.
    relevant_query_of = {
        docno: info["cluster"] for info in queries_info for docno in info["hidden"] + info["visible"]
    }

    def doc_vector(docno: str) -> list[float]:
        vec = [rng.gauss(0.0, NOISE_STD) for _ in range(spec.dim)]
        vec[cluster_of[docno]] += CENTROID_SCALE
        qi = relevant_query_of.get(docno)
        if qi is not None:
            vec[spec.n_clusters + qi] += RELEVANT_OFFSET
        return vec

    write_embeddings(
        out / "embeddings.bin", spec.dim, ((docno, doc_vector(docno)) for docno in all_docnos)
    )

    def query_vector(info: dict) -> list[float]:
        vec = [0.0] * spec.dim
        vec[info["cluster"]] = CENTROID_SCALE
        vec[spec.n_clusters + info["cluster"]] = RELEVANT_OFFSET
        return vec

    write_embeddings(
        out / "query_embeddings.bin", spec.dim, ((info["qid"], query_vector(info)) for info in queries_info)
    )

    manifest = {
        "generator": "slidegar.synth",
        "rng": RNG_ID,
        "spec": asdict(spec),
        "queries": queries_info,
        "files": {
            "corpus": "corpus.tsv",
            "queries": "queries.tsv",
            "qrels": "qrels.txt",
            "embeddings": "embeddings.bin",
            "query_embeddings": "query_embeddings.bin",
        },
    }
    with open(out / "spec.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, sort_keys=True, indent=2)
        f.write("\n")
    return manifest
