"""The inter-stage currency: an ordered list of (docno, score) pairs."""

from __future__ import annotations

from typing import Iterable, NamedTuple


class ScoredDoc(NamedTuple):
    docno: str
    score: float


# Rankings are plain lists of ScoredDoc, best first.
Ranking = list[ScoredDoc]


def make_ranking(pairs: Iterable[tuple[str, float]]) -> Ranking:
    return [ScoredDoc(docno, float(score)) for docno, score in pairs]


def docnos(ranking: Ranking) -> list[str]:
    return [sd.docno for sd in ranking]
