"""Sliding-window reranking strategies over score-free listwise rankers.

Three strategies share one windowed loop:

- ``sliding_window_baseline`` reranks the initial pool in place, tail first,
  and can never surface a document outside that pool.
- ``slidegar`` alternates the fresh half of each window between the initial
  ranking and a corpus-graph frontier fed by the ranker's own feedback, so
  documents the first stage missed can still reach the final list.
- ``slidegar_rm3`` draws fresh candidates from BM25 retrieval with an
  RM3-expanded query instead of the graph; the ranker always sees the
  original query.

Each window keeps its top ``b`` documents for the next round and dumps the
rest to the result accumulator; a dumped document is final. The loop ends
once ``c - b`` documents are accumulated (or every candidate source is
exhausted), and the last carried top-``b`` goes on top of the output.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

from .corpus_graph import CorpusGraph, neighbours
from .corpus_store import CorpusStore, Query
from .lexical_index import InvertedIndex, retrieve_expanded, rm3_expand
from .rankers import Batch, CallCounter, ListwiseRanker, Window
from .ranking import Ranking, ScoredDoc


@dataclass(frozen=True)
class RerankConfig:
    """Window size w, step size b, budget c, and the graph depth to use.

    The carried half of every window holds b documents, so window sizes
    beyond the first are 2b; with the default b = w/2 that equals w.
    """

    w: int = 20
    b: int = 10
    c: int = 50
    truncate_k: int = 16

    def __post_init__(self) -> None:
        if not 1 <= self.b < self.w <= self.c:
            raise ValueError(
                f"invalid config: need 1 <= b < w <= c, got w={self.w} b={self.b} c={self.c}"
            )
        if self.truncate_k < 0:
            raise ValueError("truncate_k must be >= 0")


def pseudo_scores(batch: Batch) -> list[tuple[str, float]]:
    """Reciprocal-rank surrogate scores for a score-free ordering."""
    return [(docno, 1.0 / rank) for rank, docno in enumerate(batch.ordering, start=1)]


def expected_llm_calls(cfg: RerankConfig) -> int:
    """Closed-form ranker-call count for a full-budget run: ceil((c-w)/b) + 1."""
    return (cfg.c - cfg.w + cfg.b - 1) // cfg.b + 1


def _run_window_loop(
    query: Query,
    r0: Ranking,
    ranker: ListwiseRanker,
    cfg: RerankConfig,
    store: CorpusStore,
    propose: Callable[[list[str], set[str], list[str]], list[str]],
) -> tuple[Ranking, CallCounter, float]:
    """Shared do-while loop.

    ``propose(batch_order, seen, rest)`` returns the ordered pool the next
    window's fresh half is drawn from; an empty pool ends the run. ``rest``
    is the not-yet-ranked remainder of the initial pool, handed to propose
    for fallback use.
    """
    if not r0:
        raise ValueError("initial ranking must be non-empty")
    counter = CallCounter()
    started = time.perf_counter()
    ranker_seconds = 0.0

    r0_docnos = [sd.docno for sd in r0]
    rest = list(r0_docnos)
    rest_set = set(rest)
    dumped: list[tuple[str, int, int]] = []  # (docno, iteration, window rank)
    seen: set[str] = set()
    l1: list[str] = []
    window_docnos = list(r0_docnos[: cfg.w])
    iteration = 0

    while True:
        iteration += 1
        window = Window(query=query, docs=tuple((d, store.text(d)) for d in window_docnos))
        t0 = time.perf_counter()
        batch = ranker.rank(window)
        elapsed = time.perf_counter() - t0
        ranker_seconds += elapsed
        counter.add(elapsed)

        order = list(batch.ordering)
        seen.update(order)
        ranked_from_rest = rest_set.intersection(order)
        if ranked_from_rest:
            rest = [d for d in rest if d not in ranked_from_rest]
            rest_set -= ranked_from_rest
        l1 = order[: cfg.b]
        for rank, docno in enumerate(order[cfg.b :], start=cfg.b + 1):
            dumped.append((docno, iteration, rank))

        pool = propose(order, seen, rest)
        l2 = pool[: cfg.b]
        if not l2:
            break
        if len(dumped) >= cfg.c - cfg.b:
            break
        window_docnos = l1 + l2

    # Last carried champions on top, then dumps: later iterations competed
    # against stronger carried documents, so they outrank earlier ones.
    final = list(l1)
    final.extend(docno for docno, _, _ in sorted(dumped, key=lambda t: (-t[1], t[2])))
    del final[cfg.c :]
    ranking = [ScoredDoc(docno, 1.0 / position) for position, docno in enumerate(final, start=1)]
    bookkeeping = time.perf_counter() - started - ranker_seconds
    return ranking, counter, bookkeeping


def slidegar(
    query: Query,
    r0: Ranking,
    ranker: ListwiseRanker,
    graph: CorpusGraph,
    cfg: RerankConfig,
    store: CorpusStore,
    accumulate_frontier: bool = False,
) -> tuple[Ranking, CallCounter, float]:
    """Graph-adaptive sliding-window rerank.

    After each window the frontier is rebuilt from the batch's graph
    neighbours (prioritized by reciprocal-rank pseudo-scores) minus
    everything already ranked; the fresh half of the next window then
    alternates between the remaining initial pool and that frontier,
    falling back to whichever is non-empty. ``accumulate_frontier=True``
    additionally carries over unconsumed frontier candidates from earlier
    rounds instead of discarding them.

    Returns (ranking of length <= c, call counter, bookkeeping seconds);
    bookkeeping excludes ranker wall time.
    """
    frontier: list[str] = []
    take_frontier = False  # flipped before each selection; the first fresh half comes from the frontier

    def propose(order: list[str], seen: set[str], rest: list[str]) -> list[str]:
        nonlocal frontier, take_frontier
        scored = [(graph.doc_id(docno), 1.0 / rank) for rank, docno in enumerate(order, start=1)]
        fresh = [graph.docnos[i] for i in neighbours(graph, scored, cfg.truncate_k)]
        fresh = [docno for docno in fresh if docno not in seen]
        if accumulate_frontier:
            new = set(fresh)
            fresh += [docno for docno in frontier if docno not in seen and docno not in new]
        frontier = fresh
        take_frontier = not take_frontier
        pool = frontier if take_frontier else rest
        if not pool:
            pool = rest if take_frontier else frontier
        return pool

    return _run_window_loop(query, r0, ranker, cfg, store, propose)


def slidegar_rm3(
    query: Query,
    r0: Ranking,
    ranker: ListwiseRanker,
    index: InvertedIndex,
    cfg: RerankConfig,
    store: CorpusStore,
    fb_docs: int = 10,
    fb_terms: int = 10,
    orig_weight: float = 0.6,
) -> tuple[Ranking, CallCounter]:
    """Feedback variant: fresh candidates come from the lexical index.

    After each window the query is expanded from the top-b of the batch
    (pseudo-scored by reciprocal rank) and the next b candidates are
    retrieved with that expanded query, excluding everything already seen.
    The expanded query never reaches the ranker. When expansion retrieves
    nothing, the remaining initial pool fills the window instead.
    """

    def propose(order: list[str], seen: set[str], rest: list[str]) -> list[str]:
        feedback = [ScoredDoc(docno, 1.0 / rank) for rank, docno in enumerate(order[: cfg.b], start=1)]
        pool: list[str] = []
        try:
            expanded = rm3_expand(
                index, query, feedback, fb_docs=fb_docs, fb_terms=fb_terms, orig_weight=orig_weight
            )
        except ValueError:
            expanded = None  # no usable expansion terms
        if expanded is not None:
            exclude = {index.doc_id(docno) for docno in seen}
            pool = [sd.docno for sd in retrieve_expanded(index, expanded, cfg.b, exclude=exclude)]
        if not pool:
            pool = rest
        return pool

    ranking, counter, _ = _run_window_loop(query, r0, ranker, cfg, store, propose)
    return ranking, counter


def sliding_window_baseline(
    query: Query,
    r0: Ranking,
    ranker: ListwiseRanker,
    cfg: RerankConfig,
    store: CorpusStore,
) -> tuple[Ranking, CallCounter]:
    """Standard tail-to-head sliding-window rerank of the initial pool.

    The pool is truncated to the budget, then windows of w documents are
    reranked in place from the back of the list towards the front with
    stride b (the last window clamps to the list head).
    """
    if not r0:
        raise ValueError("initial ranking must be non-empty")
    counter = CallCounter()
    items = [sd.docno for sd in r0][: cfg.c]
    n = len(items)
    if n <= cfg.w:
        starts = [0]
    else:
        starts = []
        start = n - cfg.w
        while True:
            starts.append(start)
            if start == 0:
                break
            start = max(0, start - cfg.b)
    for start in starts:
        chunk = items[start : start + cfg.w]
        window = Window(query=query, docs=tuple((d, store.text(d)) for d in chunk))
        t0 = time.perf_counter()
        batch = ranker.rank(window)
        counter.add(time.perf_counter() - t0)
        items[start : start + cfg.w] = batch.ordering
    ranking = [ScoredDoc(docno, 1.0 / position) for position, docno in enumerate(items, start=1)]
    return ranking, counter


def telemetry_record(
    qid: str,
    r0: Ranking,
    ranking: Ranking,
    counter: CallCounter,
    bookkeeping_seconds: float,
) -> dict:
    """Per-query telemetry: call count, split timings, and how many output
    documents were not in the initial pool."""
    initial = {sd.docno for sd in r0}
    escaped = sum(1 for sd in ranking if sd.docno not in initial)
    return {
        "qid": qid,
        "llm_calls": counter.calls,
        "bookkeeping_ms": round(bookkeeping_seconds * 1000.0, 3),
        "ranker_ms": round(counter.wall_time * 1000.0, 3),
        "escaped_docs": escaped,
    }
