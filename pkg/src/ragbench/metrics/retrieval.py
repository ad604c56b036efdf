"""Ranking metrics over gold-id judgments: MRR, MAP, nDCG, Recall@k, HitRate@k.

All metrics use binary relevance, look only at the top k of the ranking,
and are pure functions, trivially parallel across queries.
"""
from __future__ import annotations

import math
from collections.abc import Collection, Sequence
from dataclasses import dataclass


@dataclass(frozen=True)
class RankingJudgment:
    """A ranked id list judged against a non-empty gold set at cutoff k.

    Duplicate ids in the ranking are rejected outright: they signal an
    upstream fusion or rerank bug, not something to deduplicate silently.
    """

    ranked_ids: tuple[str, ...]
    gold_ids: frozenset[str]
    k: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "ranked_ids", tuple(self.ranked_ids))
        object.__setattr__(self, "gold_ids", frozenset(self.gold_ids))
        if not self.gold_ids:
            raise ValueError("gold_ids must be non-empty")
        if len(set(self.ranked_ids)) != len(self.ranked_ids):
            raise ValueError(f"duplicate ids in ranking: {self.ranked_ids}")
        if self.k < 1:
            raise ValueError("k must be a positive int")

    @property
    def top_k(self) -> tuple[str, ...]:
        return self.ranked_ids[: self.k]


def reciprocal_rank(j: RankingJudgment) -> float:
    """1/rank of the first gold id within the top k; 0 if none appears."""
    for rank, doc_id in enumerate(j.top_k, start=1):
        if doc_id in j.gold_ids:
            return 1.0 / rank
    return 0.0


def average_precision(j: RankingJudgment) -> float:
    """Precision summed at each gold hit, normalized by min(|gold|, k)."""
    hits = 0
    total = 0.0
    for rank, doc_id in enumerate(j.top_k, start=1):
        if doc_id in j.gold_ids:
            hits += 1
            total += hits / rank
    return total / min(len(j.gold_ids), j.k)


def ndcg(j: RankingJudgment) -> float:
    """Binary-gain nDCG: DCG over hit ranks divided by the ideal DCG."""
    dcg = sum(
        1.0 / math.log2(rank + 1)
        for rank, doc_id in enumerate(j.top_k, start=1)
        if doc_id in j.gold_ids
    )
    ideal = sum(
        1.0 / math.log2(rank + 1) for rank in range(1, min(len(j.gold_ids), j.k) + 1)
    )
    return dcg / ideal


def recall_at_k(j: RankingJudgment) -> float:
    """Fraction of gold ids present in the top k."""
    return len(j.gold_ids.intersection(j.top_k)) / len(j.gold_ids)


def hit_rate_at_k(j: RankingJudgment) -> float:
    """1 iff at least one gold id appears in the top k."""
    return 1.0 if j.gold_ids.intersection(j.top_k) else 0.0


def aggregate(values: Sequence[float]) -> float:
    """Arithmetic mean of per-query scores; empty input is an error."""
    if not values:
        raise ValueError("cannot aggregate an empty list of scores")
    return sum(values) / len(values)


RETRIEVAL_METRICS = {
    "mrr": reciprocal_rank,
    "map": average_precision,
    "ndcg": ndcg,
    "recall": recall_at_k,
    "hit_rate": hit_rate_at_k,
}


def score_ranking(
    ranked_ids: Sequence[str], gold_ids: Collection[str], k: int, metrics: Sequence[str]
) -> dict[str, float]:
    """Compute the selected retrieval metrics for one ranked list."""
    unknown = [m for m in metrics if m not in RETRIEVAL_METRICS]
    if unknown:
        raise ValueError(f"unknown retrieval metrics: {unknown}")
    judgment = RankingJudgment(
        ranked_ids=tuple(ranked_ids), gold_ids=frozenset(gold_ids), k=k
    )
    return {name: RETRIEVAL_METRICS[name](judgment) for name in metrics}
