"""Operator surface: build artifacts, run experiments, evaluate, sweep.

Exit codes: 0 ok, 1 usage error, 2 runtime error. Fatal errors print one
machine-parsable ``error: ...`` line on stderr.

The ``run`` and ``sweep-k`` commands take a single JSON config document;
unset keys fall back to the defaults below and the fully resolved config is
echoed as the first telemetry record, so any run can be reproduced verbatim.
Remote-ranker credentials are read from the ``SLIDEGAR_RANKER_AUTH``
environment variable and sent as the ``Authorization`` header.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import adaptive_rerank, corpus_graph, corpus_store, dense_index, eval as run_eval, lexical_index, synth
from .adaptive_rerank import RerankConfig
from .rankers import IdentityRanker, NoisyOracleRanker, OracleRanker, RemoteRanker

AUTH_ENV_VAR = "SLIDEGAR_RANKER_AUTH"

CONFIG_DEFAULTS: dict = {
    "corpus": None,
    "queries": None,
    "qrels": None,
    "dedup": False,
    "retriever": "bm25",  # bm25 | dense
    "index_dir": None,  # optional: prebuilt lexical index (else built in memory)
    "embeddings": None,
    "query_embeddings": None,
    "normalize_embeddings": False,
    "strategy": "slidegar",  # baseline | slidegar | slidegar_rm3
    "graph": None,
    "truncate_k": 16,
    "accumulate_frontier": False,
    "ranker": "oracle",  # oracle | noisy_oracle | identity | remote
    "endpoint": None,
    "timeout": 30.0,
    "retries": 3,
    "swap_prob": 0.1,
    "seed": 0,
    "w": 20,
    "b": 10,
    "c": 50,
    "rm3": {"fb_docs": 10, "fb_terms": 10, "orig_weight": 0.6},
    "rel_threshold": 1,
    "run_tag": None,
    "run_out": "run.trec",
    "telemetry_out": None,
    "jobs": 1,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # exit 1 on usage errors, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def load_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        user = json.load(f)
    if not isinstance(user, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    unknown = set(user) - set(CONFIG_DEFAULTS)
    if unknown:
        raise ValueError(f"{path}: unknown config keys: {', '.join(sorted(unknown))}")
    cfg = copy.deepcopy(CONFIG_DEFAULTS)
    for key, value in user.items():
        if key == "rm3":
            bad = set(value) - set(cfg["rm3"])
            if bad:
                raise ValueError(f"{path}: unknown rm3 keys: {', '.join(sorted(bad))}")
            cfg["rm3"].update(value)
        else:
            cfg[key] = value
    _validate_config(cfg)
    if cfg["run_tag"] is None:
        cfg["run_tag"] = cfg["strategy"]
    if cfg["telemetry_out"] is None:
        cfg["telemetry_out"] = str(cfg["run_out"]) + ".telemetry.jsonl"
    return cfg


def _validate_config(cfg: dict) -> None:
    for key in ("corpus", "queries"):
        if not cfg[key]:
            raise ValueError(f"config requires {key!r}")
    if cfg["retriever"] not in ("bm25", "dense"):
        raise ValueError(f"unknown retriever {cfg['retriever']!r}")
    if cfg["strategy"] not in ("baseline", "slidegar", "slidegar_rm3"):
        raise ValueError(f"unknown strategy {cfg['strategy']!r}")
    if cfg["ranker"] not in ("oracle", "noisy_oracle", "identity", "remote"):
        raise ValueError(f"unknown ranker {cfg['ranker']!r}")
    if cfg["strategy"] == "slidegar" and not cfg["graph"]:
        raise ValueError("strategy 'slidegar' requires a graph")
    if cfg["ranker"] == "remote" and not cfg["endpoint"]:
        raise ValueError("ranker 'remote' requires an endpoint")
    if cfg["ranker"] in ("oracle", "noisy_oracle") and not cfg["qrels"]:
        raise ValueError(f"ranker {cfg['ranker']!r} requires qrels")
    if cfg["retriever"] == "dense" and not (cfg["embeddings"] and cfg["query_embeddings"]):
        raise ValueError("retriever 'dense' requires embeddings and query_embeddings")
    if cfg["jobs"] < 1:
        raise ValueError("jobs must be >= 1")


class _Pipeline:
    """Artifacts loaded once per config; shared by run and sweep-k."""

    def __init__(self, cfg: dict) -> None:
        self.cfg = cfg
        self.store, _ = corpus_store.ingest_corpus(cfg["corpus"], dedup=cfg["dedup"])
        self.queries = corpus_store.load_queries(cfg["queries"])
        self.grades: dict[str, dict[str, int]] = {}
        if cfg["qrels"]:
            entries = corpus_store.load_qrels(cfg["qrels"])
            table, _ = corpus_store.map_qrels(entries, self.store)
            self.grades = corpus_store.grades_by_docno(table, self.store)
        self.index = None
        if cfg["retriever"] == "bm25" or cfg["strategy"] == "slidegar_rm3":
            if cfg["index_dir"]:
                self.index = lexical_index.load_index(cfg["index_dir"], self.store)
            else:
                self.index = lexical_index.build_index(self.store)
        self.table = None
        self.query_vectors: dict = {}
        if cfg["retriever"] == "dense":
            self.table = dense_index.load_embeddings(
                cfg["embeddings"], self.store, normalize=cfg["normalize_embeddings"]
            )
            self.query_vectors = dense_index.load_query_embeddings(cfg["query_embeddings"], self.queries)
        self.graph = corpus_graph.load_graph(cfg["graph"]) if cfg["graph"] else None
        self.ranker = self._make_ranker(cfg)

    def _make_ranker(self, cfg: dict):
        kind = cfg["ranker"]
        if kind == "identity":
            return IdentityRanker()
        if kind == "oracle":
            return OracleRanker(self.grades)
        if kind == "noisy_oracle":
            return NoisyOracleRanker(self.grades, swap_prob=cfg["swap_prob"], seed=cfg["seed"])
        return RemoteRanker(
            cfg["endpoint"],
            timeout=cfg["timeout"],
            retries=cfg["retries"],
            auth=os.environ.get(AUTH_ENV_VAR),
        )

    def initial_ranking(self, query: corpus_store.Query, k: int):
        if self.cfg["retriever"] == "bm25":
            return lexical_index.bm25_retrieve(self.index, query, k)
        return dense_index.dense_retrieve(self.table, self.query_vectors[query.qid], k)

    def rerank_one(self, query: corpus_store.Query, rcfg: RerankConfig) -> tuple[str, list, dict]:
        cfg = self.cfg
        r0 = self.initial_ranking(query, rcfg.c)
        if not r0:
            return query.qid, [], {"type": "query", "qid": query.qid, "note": "empty initial ranking"}
        started = time.perf_counter()
        if cfg["strategy"] == "baseline":
            ranking, counter = adaptive_rerank.sliding_window_baseline(
                query, r0, self.ranker, rcfg, self.store
            )
        elif cfg["strategy"] == "slidegar":
            ranking, counter, _ = adaptive_rerank.slidegar(
                query, r0, self.ranker, self.graph, rcfg, self.store,
                accumulate_frontier=cfg["accumulate_frontier"],
            )
        else:
            ranking, counter = adaptive_rerank.slidegar_rm3(
                query, r0, self.ranker, self.index, rcfg, self.store,
                fb_docs=cfg["rm3"]["fb_docs"],
                fb_terms=cfg["rm3"]["fb_terms"],
                orig_weight=cfg["rm3"]["orig_weight"],
            )
        bookkeeping = time.perf_counter() - started - counter.wall_time
        record = adaptive_rerank.telemetry_record(query.qid, r0, ranking, counter, bookkeeping)
        record["type"] = "query"
        return query.qid, ranking, record

    def execute(self, rcfg: RerankConfig) -> tuple[dict, list[dict]]:
        jobs = self.cfg["jobs"]
        if jobs == 1:
            results = [self.rerank_one(q, rcfg) for q in self.queries]
        else:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(lambda q: self.rerank_one(q, rcfg), self.queries))
        results.sort(key=lambda t: t[0])
        run = {qid: ranking for qid, ranking, _ in results if ranking}
        telemetry = [record for _, _, record in results]
        return run, telemetry


def _rerank_config(cfg: dict, truncate_k: int | None = None) -> RerankConfig:
    return RerankConfig(
        w=cfg["w"], b=cfg["b"], c=cfg["c"],
        truncate_k=cfg["truncate_k"] if truncate_k is None else truncate_k,
    )


def cmd_synth(args: argparse.Namespace) -> int:
    spec = synth.SynthSpec(
        n_clusters=args.clusters,
        docs_per_cluster=args.docs_per_cluster,
        vocab_per_cluster=args.vocab_per_cluster,
        shared_vocab=args.shared_vocab,
        dim=args.dim,
        n_queries=args.queries,
        relevant_per_query=args.relevant_per_query,
        retrieval_gap=args.gap,
        seed=args.seed,
    )
    manifest = synth.generate(spec, args.out)
    n_docs = spec.n_clusters * spec.docs_per_cluster
    print(f"wrote {args.out}: {n_docs} docs, {len(manifest['queries'])} queries")
    return 0


def cmd_build_index(args: argparse.Namespace) -> int:
    store, report = corpus_store.ingest_corpus(args.corpus, dedup=args.dedup)
    index = lexical_index.build_index(store)
    lexical_index.save_index(index, args.out, dedup=args.dedup)
    if args.dedup:
        corpus_store.write_dedup_report(Path(args.out) / "dedup_report.jsonl", report)
    print(f"wrote {args.out}: {index.doc_count} docs, {len(index.postings)} terms, {len(report)} dropped")
    return 0


def cmd_load_embeddings(args: argparse.Namespace) -> int:
    store, _ = corpus_store.ingest_corpus(args.corpus, dedup=args.dedup)
    table = dense_index.load_embeddings(args.embeddings, store, normalize=args.normalize)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dense_index.write_embeddings(
        out / "embeddings.bin", table.dim,
        zip(table.docnos, table.matrix), normalized=table.normalized,
    )
    print(f"wrote {out / 'embeddings.bin'}: {len(table)} vectors, dim={table.dim}")
    return 0


def cmd_build_graph(args: argparse.Namespace) -> int:
    store, _ = corpus_store.ingest_corpus(args.corpus, dedup=args.dedup)
    if args.source == "lexical":
        index = lexical_index.build_index(store)
        graph = corpus_graph.build_graph_lexical(index, store, args.k)
    else:
        if not args.embeddings:
            raise ValueError("--source dense requires --embeddings")
        table = dense_index.load_embeddings(args.embeddings, store, normalize=args.normalize)
        graph = corpus_graph.build_graph_dense(table, args.k)
    corpus_graph.save_graph(args.out, graph)
    print(f"wrote {args.out}: {len(graph)} nodes, k={graph.k}, source={graph.source}")
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    pipeline = _Pipeline(cfg)
    run, telemetry = pipeline.execute(_rerank_config(cfg))
    run_eval.write_run(cfg["run_out"], run, cfg["run_tag"])
    with open(cfg["telemetry_out"], "w", encoding="utf-8") as f:
        f.write(json.dumps({"type": "config", "config": cfg}, sort_keys=True) + "\n")
        for record in telemetry:
            f.write(json.dumps(record, sort_keys=True) + "\n")
    lines = sum(len(r) for r in run.values())
    print(f"wrote {cfg['run_out']} ({len(run)} queries, {lines} lines) and {cfg['telemetry_out']}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    run, _ = run_eval.read_run(args.run)
    qrels: dict[str, dict[str, int]] = {}
    for entry in corpus_store.load_qrels(args.qrels):
        qrels.setdefault(entry.qid, {})[entry.docno] = entry.grade
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    for metric in metrics:
        run_eval.parse_metric(metric)
    report = run_eval.evaluate_run(
        run, qrels, metrics, rel_threshold=args.rel_threshold,
        exponential=(args.gain == "exp"),
    )
    print(report.to_json() if args.json else report.format_table())
    return 0


def cmd_sweep_k(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    if cfg["strategy"] != "slidegar":
        raise ValueError("sweep-k requires strategy 'slidegar'")
    if not cfg["qrels"]:
        raise ValueError("sweep-k requires qrels for evaluation")
    k_list = [int(k) for k in args.k_list.split(",") if k.strip()]
    pipeline = _Pipeline(cfg)
    metrics = ["ndcg@10", f"recall@{cfg['c']}"]
    rows = []
    for k in k_list:
        run, _ = pipeline.execute(_rerank_config(cfg, truncate_k=k))
        report = run_eval.evaluate_run(run, pipeline.grades, metrics, rel_threshold=cfg["rel_threshold"])
        rows.append((k, [report.means.get(m) for m in metrics]))
    header = "k".rjust(4) + "  " + "  ".join(m.rjust(10) for m in metrics)
    print(header)
    for k, values in rows:
        cells = "  ".join(("-" if v is None else f"{v:.4f}").rjust(10) for v in values)
        print(f"{k:>4}  {cells}")
    recall = [values[1] for _, values in rows if values[1] is not None]
    non_decreasing = all(b >= a - 0.01 for a, b in zip(recall, recall[1:]))
    print(f"# recall trend non-decreasing within 0.01: {'yes' if non_decreasing else 'no'}")
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="slidegar", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a deterministic synthetic collection")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--clusters", type=int, default=6)
    p.add_argument("--docs-per-cluster", type=int, default=85)
    p.add_argument("--vocab-per-cluster", type=int, default=40)
    p.add_argument("--shared-vocab", type=int, default=15)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--queries", type=int, default=6)
    p.add_argument("--relevant-per-query", type=int, default=10)
    p.add_argument("--gap", type=float, default=0.5)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build-index", help="build and persist the lexical index")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dedup", action="store_true")
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("load-embeddings", help="validate an embedding file against a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dedup", action="store_true")
    p.add_argument("--normalize", action="store_true")
    p.set_defaults(func=cmd_load_embeddings)

    p = sub.add_parser("build-graph", help="build and persist a corpus graph")
    p.add_argument("--corpus", required=True)
    p.add_argument("--source", choices=["lexical", "dense"], required=True)
    p.add_argument("--embeddings")
    p.add_argument("--k", type=int, default=16)
    p.add_argument("--out", required=True)
    p.add_argument("--dedup", action="store_true")
    p.add_argument("--normalize", action="store_true")
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("run", help="run a reranking pipeline from a JSON config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="evaluate a TREC run file against qrels")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--metrics", default="ndcg@10,recall@50")
    p.add_argument("--rel-threshold", type=int, default=1)
    p.add_argument("--gain", choices=["linear", "exp"], default="linear")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep-k", help="rerun one config over several graph depths")
    p.add_argument("--config", required=True)
    p.add_argument("--k-list", default="2,4,6,8,10,12,14,16")
    p.set_defaults(func=cmd_sweep_k)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed its message
        return int(exc.code or 0)
    try:
        return args.func(args)
    except Exception as exc:  # single operator-facing error line, exit 2
        print(f"error: {exc}", file=sys.stderr)
        return 2


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
