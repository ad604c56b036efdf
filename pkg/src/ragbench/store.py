"""In-process retrieval layer: dense vector store, BM25 inverted index, rank fusion.

Indexes are built single-threaded and then frozen via ``finalize()``; all
query operations afterwards are read-only and safe for concurrent callers.
Every ranking operation breaks score ties by ascending document id so that
identical inputs always produce identical rankings.
"""
from __future__ import annotations

import json
import math
import re
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass

import numpy as np

SNAPSHOT_MAGIC = "ragbench-index"
SNAPSHOT_VERSION = 1

RRF_CONSTANT = 60
DEFAULT_K1 = 1.2
DEFAULT_B = 0.75

# Pluggable second-stage scorer: (query, document text) -> score.
PairScorer = Callable[[str, str], float]


class StoreError(Exception):
    """Base class for retrieval-layer failures."""


class DimensionMismatchError(StoreError):
    pass


class EmptyStoreError(StoreError):
    pass


class EmptyIndexError(StoreError):
    pass


class EmptyQueryError(StoreError):
    pass


class QueryIdMismatchError(StoreError):
    pass


class ScorerFailureError(StoreError):
    pass


_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric runs. No stemming, no stopwords."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class RetrievalResult:
    """Ranked (document id, score) pairs for one query, at most `k` deep."""

    query_id: str
    ranked: tuple[tuple[str, float], ...]
    k: int

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "ranked", tuple((str(d), float(s)) for d, s in self.ranked)
        )
        if self.k < 1:
            raise ValueError("k must be a positive int")
        if len(self.ranked) > self.k:
            raise ValueError(f"ranking holds {len(self.ranked)} entries but k={self.k}")
        ids = [d for d, _ in self.ranked]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate document ids in ranking for query {self.query_id!r}")
        scores = [s for _, s in self.ranked]
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise ValueError("scores must be non-increasing in rank order")

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(d for d, _ in self.ranked)

    def __len__(self) -> int:
        return len(self.ranked)


class VectorStore:
    """Exact (exhaustive-scan) dense store over unit-norm vectors.

    Vectors are L2-normalized at insertion, so cosine similarity is a plain
    dot product at query time. ``query_log`` records the requested depth of
    every query for test instrumentation.
    """

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError("dim must be a positive int")
        self.dim = dim
        self._vectors: dict[str, np.ndarray] = {}
        self._ids: list[str] = []
        self._matrix: np.ndarray | None = None
        self._finalized = False
        self.query_log: list[int] = []

    def add(self, doc_id: str, vector: Sequence[float]) -> None:
        if self._finalized:
            raise StoreError("store is finalized and immutable")
        if doc_id in self._vectors:
            raise StoreError(f"duplicate document id {doc_id!r}")
        vec = np.asarray(vector, dtype=np.float64)
        if vec.shape != (self.dim,):
            raise DimensionMismatchError(
                f"vector for {doc_id!r} has shape {vec.shape}, expected ({self.dim},)"
            )
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            raise ValueError(f"vector for {doc_id!r} has zero norm")
        self._vectors[doc_id] = vec / norm

    def finalize(self) -> "VectorStore":
        self._ids = list(self._vectors)
        self._matrix = (
            np.stack([self._vectors[d] for d in self._ids])
            if self._ids
            else np.zeros((0, self.dim))
        )
        self._finalized = True
        return self

    @property
    def finalized(self) -> bool:
        return self._finalized

    @property
    def vectors(self) -> Mapping[str, np.ndarray]:
        return dict(self._vectors)

    def __len__(self) -> int:
        return len(self._vectors)


def dense_top_k(
    store: VectorStore, query_vec: Sequence[float], k: int, query_id: str = ""
) -> RetrievalResult:
    """The k documents maximizing cosine similarity, exhaustively scanned."""
    if k < 1:
        raise ValueError("k must be a positive int")
    if not store.finalized:
        raise StoreError("store must be finalized before querying")
    if len(store) == 0:
        raise EmptyStoreError("vector store holds no documents")
    q = np.asarray(query_vec, dtype=np.float64)
    if q.shape != (store.dim,):
        raise DimensionMismatchError(f"query has shape {q.shape}, expected ({store.dim},)")
    norm = float(np.linalg.norm(q))
    if norm > 0.0:
        q = q / norm
    scores = store._matrix @ q
    order = sorted(range(len(store._ids)), key=lambda i: (-scores[i], store._ids[i]))
    ranked = tuple((store._ids[i], float(scores[i])) for i in order[:k])
    store.query_log.append(k)
    return RetrievalResult(query_id=query_id, ranked=ranked, k=k)


class Bm25Index:
    """Okapi BM25 inverted index with idf = ln(1 + (N - df + 0.5)/(df + 0.5))."""

    def __init__(self, k1: float = DEFAULT_K1, b: float = DEFAULT_B):
        self.k1 = k1
        self.b = b
        self.postings: dict[str, list[tuple[str, int]]] = {}
        self.doc_lengths: dict[str, int] = {}
        self.avg_doc_len = 0.0
        self.doc_count = 0
        self._finalized = False
        self.query_log: list[int] = []

    def add(self, doc_id: str, text: str) -> None:
        if self._finalized:
            raise StoreError("index is finalized and immutable")
        if doc_id in self.doc_lengths:
            raise StoreError(f"duplicate document id {doc_id!r}")
        tokens = tokenize(text)
        self.doc_lengths[doc_id] = len(tokens)
        counts: dict[str, int] = {}
        for tok in tokens:
            counts[tok] = counts.get(tok, 0) + 1
        for term, tf in counts.items():
            self.postings.setdefault(term, []).append((doc_id, tf))

    def finalize(self) -> "Bm25Index":
        self.doc_count = len(self.doc_lengths)
        total = sum(self.doc_lengths.values())
        self.avg_doc_len = total / self.doc_count if self.doc_count else 0.0
        self._finalized = True
        return self

    @property
    def finalized(self) -> bool:
        return self._finalized

    def idf(self, term: str) -> float:
        df = len(self.postings.get(term, ()))
        return math.log(1.0 + (self.doc_count - df + 0.5) / (df + 0.5))


def bm25_top_k(index: Bm25Index, query: str, k: int, query_id: str = "") -> RetrievalResult:
    """Top-k documents by Okapi BM25 score.

    Documents with zero overlap score zero and are excluded, so the result
    may be shorter than k.
    """
    if k < 1:
        raise ValueError("k must be a positive int")
    if not index.finalized:
        raise StoreError("index must be finalized before querying")
    if index.doc_count == 0:
        raise EmptyIndexError("bm25 index holds no documents")
    tokens = tokenize(query)
    if not tokens:
        raise EmptyQueryError(f"query {query!r} has no tokens after normalization")
    scores: dict[str, float] = {}
    # Distinct terms, first-occurrence order; each term contributes once.
    for term in dict.fromkeys(tokens):
        posting = index.postings.get(term)
        if not posting:
            continue
        idf = index.idf(term)
        for doc_id, tf in posting:
            length_norm = index.k1 * (
                1.0 - index.b + index.b * index.doc_lengths[doc_id] / index.avg_doc_len
            )
            scores[doc_id] = scores.get(doc_id, 0.0) + idf * tf * (index.k1 + 1.0) / (
                tf + length_norm
            )
    ranked = sorted(scores.items(), key=lambda item: (-item[1], item[0]))[:k]
    index.query_log.append(k)
    return RetrievalResult(query_id=query_id, ranked=tuple(ranked), k=k)


def hybrid_fuse(dense: RetrievalResult, sparse: RetrievalResult, k: int) -> RetrievalResult:
    """Reciprocal Rank Fusion: fused(d) = sum over lists of 1/(60 + rank)."""
    if k < 1:
        raise ValueError("k must be a positive int")
    if dense.query_id != sparse.query_id:
        raise QueryIdMismatchError(
            f"cannot fuse results for {dense.query_id!r} and {sparse.query_id!r}"
        )
    fused: dict[str, float] = {}
    for result in (dense, sparse):
        for rank, (doc_id, _) in enumerate(result.ranked, start=1):
            fused[doc_id] = fused.get(doc_id, 0.0) + 1.0 / (RRF_CONSTANT + rank)
    ranked = sorted(fused.items(), key=lambda item: (-item[1], item[0]))[:k]
    return RetrievalResult(query_id=dense.query_id, ranked=tuple(ranked), k=k)


def rerank(
    candidates: RetrievalResult,
    query: str,
    scorer: PairScorer,
    final_k: int,
    texts: Mapping[str, str],
) -> RetrievalResult:
    """Rescore every candidate with `scorer` and keep the top `final_k`.

    Original retrieval scores are discarded. Scorer exceptions are wrapped
    in ScorerFailureError carrying the offending document id.
    """
    if final_k < 1:
        raise ValueError("final_k must be a positive int")
    if len(candidates.ranked) < final_k:
        raise ValueError(
            f"need at least final_k={final_k} candidates, got {len(candidates.ranked)}"
        )
    rescored: list[tuple[str, float]] = []
    for doc_id, _ in candidates.ranked:
        if doc_id not in texts:
            raise StoreError(f"no text available for candidate document {doc_id!r}")
        try:
            score = float(scorer(query, texts[doc_id]))
        except Exception as exc:
            raise ScorerFailureError(f"scorer failed on document {doc_id!r}: {exc}") from exc
        rescored.append((doc_id, score))
    rescored.sort(key=lambda item: (-item[1], item[0]))
    return RetrievalResult(
        query_id=candidates.query_id, ranked=tuple(rescored[:final_k]), k=final_k
    )


def save_snapshot(
    path: str, store: VectorStore | None = None, index: Bm25Index | None = None
) -> None:
    """Persist finalized indexes as a single versioned JSON snapshot."""
    payload: dict = {"magic": SNAPSHOT_MAGIC, "version": SNAPSHOT_VERSION}
    if store is not None:
        if not store.finalized:
            raise StoreError("cannot snapshot an unfinalized vector store")
        payload["dense"] = {
            "dim": store.dim,
            "vectors": {d: v.tolist() for d, v in store.vectors.items()},
        }
    if index is not None:
        if not index.finalized:
            raise StoreError("cannot snapshot an unfinalized bm25 index")
        payload["bm25"] = {
            "k1": index.k1,
            "b": index.b,
            "doc_lengths": index.doc_lengths,
            "postings": {t: [[d, tf] for d, tf in plist] for t, plist in index.postings.items()},
        }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)


def load_snapshot(path: str) -> tuple[VectorStore | None, Bm25Index | None]:
    """Load a snapshot written by save_snapshot, checking magic and version."""
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("magic") != SNAPSHOT_MAGIC:
        raise StoreError(f"{path} is not a ragbench index snapshot")
    if payload.get("version") != SNAPSHOT_VERSION:
        raise StoreError(f"unsupported snapshot version {payload.get('version')!r}")
    store = None
    if "dense" in payload:
        store = VectorStore(dim=int(payload["dense"]["dim"]))
        for doc_id, vec in payload["dense"]["vectors"].items():
            store.add(doc_id, vec)
        store.finalize()
    index = None
    if "bm25" in payload:
        blob = payload["bm25"]
        index = Bm25Index(k1=blob["k1"], b=blob["b"])
        index.doc_lengths = {d: int(n) for d, n in blob["doc_lengths"].items()}
        index.postings = {
            t: [(d, int(tf)) for d, tf in plist] for t, plist in blob["postings"].items()
        }
        index.finalize()
    return store, index
