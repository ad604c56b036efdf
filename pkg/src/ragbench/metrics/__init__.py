"""Scoring functions for generated answers and retrieval rankings."""
from ragbench.metrics.generation import (
    GENERATION_METRICS,
    bleu,
    exact_match,
    gleu,
    last_number,
    normalize_answer,
    number_match,
    rouge,
    score_generation,
    token_prf,
)
from ragbench.metrics.retrieval import (
    RETRIEVAL_METRICS,
    RankingJudgment,
    aggregate,
    average_precision,
    hit_rate_at_k,
    ndcg,
    recall_at_k,
    reciprocal_rank,
    score_ranking,
)

__all__ = [
    "GENERATION_METRICS",
    "RETRIEVAL_METRICS",
    "RankingJudgment",
    "aggregate",
    "average_precision",
    "bleu",
    "exact_match",
    "gleu",
    "hit_rate_at_k",
    "last_number",
    "ndcg",
    "normalize_answer",
    "number_match",
    "recall_at_k",
    "reciprocal_rank",
    "rouge",
    "score_generation",
    "score_ranking",
    "token_prf",
]
