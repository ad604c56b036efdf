"""The method factory: nine retrieval-and-prompting strategies behind one registry.

Methods fall into three groups: no retrieval (pretrained_only, oracle),
first-stage retrieval (base_rag, bm25, hybrid_bm25, reranker), and
LLM-assisted retrieval (hyde, summarization, sum_context). Every method
produces one prompt per record; records whose LLM-assisted step failed are
reported in ``MethodResult.failures`` instead of silently falling back to
another strategy, because silent substitution would corrupt exactly the
method comparison this library exists for.

A tenth method can be plugged in with :func:`register_method`.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass
from typing import NamedTuple

from ragbench.inference import InferenceClient
from ragbench.manifest import (
    Context,
    Document,
    Prompt,
    PromptCollection,
    QaRecord,
    build_prompt_collection,
    render_template,
)
from ragbench.store import (
    Bm25Index,
    EmptyQueryError,
    PairScorer,
    RetrievalResult,
    VectorStore,
    bm25_top_k,
    dense_top_k,
    hybrid_fuse,
    rerank,
    tokenize,
)

logger = logging.getLogger(__name__)

DEFAULT_SYSTEM_MESSAGE = "You answer questions accurately and concisely."

DEFAULT_QA_TEMPLATE = (
    "Use the documents below to answer the question.\n\n"
    "{% for d in documents %}[{{ d.id }}] {{ d.text }}\n"
    "{% endfor %}\n"
    "Question: {{ question }}\n"
    "Answer:"
)

DEFAULT_NO_CONTEXT_TEMPLATE = "Question: {{ question }}\nAnswer:"

DEFAULT_HYDE_TEMPLATE = (
    "Write a short passage that plausibly answers the question.\n"
    "Question: {{ question }}\n"
    "Passage:"
)

DEFAULT_SUMMARY_TEMPLATE = (
    "Summarize the following document, keeping key facts, names, and numbers.\n\n"
    "{{ document.text }}\n\n"
    "Summary:"
)


class FactoryError(Exception):
    pass


class MissingGoldDocumentError(FactoryError):
    pass


class SummaryIntegrityError(FactoryError):
    pass


@dataclass(frozen=True)
class MethodConfig:
    method: str = "base_rag"
    k: int = 10
    reranker_ratio: int = 1
    prompt_template: str | None = None
    system_message: str = DEFAULT_SYSTEM_MESSAGE
    hyde_template: str = DEFAULT_HYDE_TEMPLATE
    summarizer_template: str = DEFAULT_SUMMARY_TEMPLATE
    scorer: str = "lexical_overlap"

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.reranker_ratio < 1:
            raise ValueError("reranker_ratio must be >= 1")

    def template_for(self, method_name: str) -> str:
        if self.prompt_template is not None:
            return self.prompt_template
        return DEFAULT_NO_CONTEXT_TEMPLATE if method_name == "pretrained_only" else DEFAULT_QA_TEMPLATE


class MethodResult(NamedTuple):
    """Per-method output: rankings (None when no retrieval ran), prompts, failures."""

    retrievals: list[RetrievalResult] | None
    prompts: PromptCollection
    failures: dict[str, str]


@dataclass
class MethodEnv:
    """Everything a registered method may need; harness fills only what's required."""

    records: Sequence[QaRecord]
    corpus: Mapping[str, Document]
    config: MethodConfig
    dense: VectorStore | None = None
    bm25: Bm25Index | None = None
    embedder: InferenceClient | None = None
    llm: InferenceClient | None = None
    summaries: Mapping[str, str] | None = None
    summary_store: VectorStore | None = None
    query_prefix: str = ""


def lexical_overlap_scorer(query: str, text: str) -> float:
    """Count of distinct tokens shared by query and document."""
    return float(len(set(tokenize(query)) & set(tokenize(text))))


def resolve_scorer(
    selector: str | PairScorer, candidates: RetrievalResult, texts: Mapping[str, str]
) -> PairScorer:
    """Turn a scorer selector into a (query, text) -> score callable.

    ``original`` and ``negated`` close over the candidates' first-stage
    scores; documents with identical text necessarily share a dense score,
    so the text-keyed lookup is unambiguous.
    """
    if callable(selector):
        return selector
    if selector == "lexical_overlap":
        return lexical_overlap_scorer
    if selector in ("original", "negated"):
        by_text = {texts[doc_id]: score for doc_id, score in candidates.ranked}
        sign = 1.0 if selector == "original" else -1.0
        return lambda query, text: sign * by_text[text]
    raise ValueError(f"unknown scorer selector {selector!r}")


def _context_from_result(result: RetrievalResult, corpus: Mapping[str, Document]) -> Context:
    docs = tuple(corpus[doc_id] for doc_id, _ in result.ranked)
    return Context(documents=docs, scores=tuple(s for _, s in result.ranked))


def _build(
    records: Sequence[QaRecord],
    contexts: Sequence[Context],
    config: MethodConfig,
    method_name: str,
) -> PromptCollection:
    return build_prompt_collection(
        records, contexts, config.template_for(method_name), config.system_message, method_name
    )


def pretrained_only(records: Sequence[QaRecord], config: MethodConfig) -> MethodResult:
    """Question-only prompts; no store is touched and no rankings exist."""
    contexts = [Context()] * len(records)
    prompts = _build(records, contexts, config, "pretrained_only")
    return MethodResult(retrievals=None, prompts=prompts, failures={})


def oracle_context(
    records: Sequence[QaRecord], corpus: Mapping[str, Document], config: MethodConfig
) -> MethodResult:
    """Gold documents handed straight to the generator, in gold order."""
    retrievals = []
    contexts = []
    for record in records:
        missing = [g for g in record.gold_doc_ids if g not in corpus]
        if missing:
            raise MissingGoldDocumentError(
                f"record {record.id!r}: gold document(s) {missing} not in corpus"
            )
        ranked = tuple((gold_id, 1.0) for gold_id in record.gold_doc_ids)
        retrievals.append(
            RetrievalResult(
                query_id=record.id, ranked=ranked, k=max(config.k, len(ranked))
            )
        )
        contexts.append(
            Context(
                documents=tuple(corpus[g] for g in record.gold_doc_ids),
                scores=tuple(1.0 for _ in record.gold_doc_ids),
            )
        )
    prompts = _build(records, contexts, config, "oracle")
    return MethodResult(retrievals=retrievals, prompts=prompts, failures={})


def base_rag(
    records: Sequence[QaRecord],
    corpus: Mapping[str, Document],
    dense: VectorStore,
    embedder: InferenceClient,
    config: MethodConfig,
    query_prefix: str = "",
) -> MethodResult:
    """Embed the question, retrieve top-k by cosine, prompt with docs in rank order."""
    vectors = embedder.embed_batch([query_prefix + r.question for r in records])
    retrievals = [
        dense_top_k(dense, vec, config.k, query_id=record.id)
        for record, vec in zip(records, vectors)
    ]
    contexts = [_context_from_result(res, corpus) for res in retrievals]
    prompts = _build(records, contexts, config, "base_rag")
    return MethodResult(retrievals=retrievals, prompts=prompts, failures={})


def bm25_method(
    records: Sequence[QaRecord],
    corpus: Mapping[str, Document],
    index: Bm25Index,
    config: MethodConfig,
) -> MethodResult:
    """Purely lexical retrieval over the raw question."""
    ok_records = []
    retrievals = []
    contexts = []
    failures: dict[str, str] = {}
    for record in records:
        try:
            result = bm25_top_k(index, record.question, config.k, query_id=record.id)
        except EmptyQueryError as exc:
            failures[record.id] = str(exc)
            continue
        ok_records.append(record)
        retrievals.append(result)
        contexts.append(_context_from_result(result, corpus))
    prompts = _build(ok_records, contexts, config, "bm25")
    return MethodResult(retrievals=retrievals, prompts=prompts, failures=failures)


def hybrid_bm25_method(
    records: Sequence[QaRecord],
    corpus: Mapping[str, Document],
    dense: VectorStore,
    index: Bm25Index,
    embedder: InferenceClient,
    config: MethodConfig,
    query_prefix: str = "",
) -> MethodResult:
    """Dense and BM25 at depth k each, fused with reciprocal rank fusion."""
    vectors = embedder.embed_batch([query_prefix + r.question for r in records])
    retrievals = []
    contexts = []
    for record, vec in zip(records, vectors):
        dense_result = dense_top_k(dense, vec, config.k, query_id=record.id)
        try:
            sparse_result = bm25_top_k(index, record.question, config.k, query_id=record.id)
        except EmptyQueryError:
            # A question with no usable tokens still has a dense ranking.
            sparse_result = RetrievalResult(query_id=record.id, ranked=(), k=config.k)
        fused = hybrid_fuse(dense_result, sparse_result, config.k)
        retrievals.append(fused)
        contexts.append(_context_from_result(fused, corpus))
    prompts = _build(records, contexts, config, "hybrid_bm25")
    return MethodResult(retrievals=retrievals, prompts=prompts, failures={})


def reranker_method(
    records: Sequence[QaRecord],
    corpus: Mapping[str, Document],
    dense: VectorStore,
    embedder: InferenceClient,
    config: MethodConfig,
    query_prefix: str = "",
) -> MethodResult:
    """Fetch k * ratio candidates, rescore them all, keep the top k."""
    depth = config.k * config.reranker_ratio
    texts = {doc_id: doc.text for doc_id, doc in corpus.items()}
    vectors = embedder.embed_batch([query_prefix + r.question for r in records])
    retrievals = []
    contexts = []
    for record, vec in zip(records, vectors):
        candidates = dense_top_k(dense, vec, depth, query_id=record.id)
        scorer = resolve_scorer(config.scorer, candidates, texts)
        final_k = min(config.k, len(candidates.ranked))
        result = rerank(candidates, record.question, scorer, final_k, texts)
        retrievals.append(result)
        contexts.append(_context_from_result(result, corpus))
    prompts = _build(records, contexts, config, "reranker")
    return MethodResult(retrievals=retrievals, prompts=prompts, failures={})


def hyde_method(
    records: Sequence[QaRecord],
    corpus: Mapping[str, Document],
    dense: VectorStore,
    embedder: InferenceClient,
    llm: InferenceClient,
    config: MethodConfig,
    query_prefix: str = "",
) -> MethodResult:
    """Retrieve with the embedding of an LLM-written hypothetical answer.

    The final prompt always carries the original question; the hypothetical
    is only a retrieval query. Records whose hypothetical generation failed
    are reported as failures, never silently retried with the raw question.
    """
    hyde_prompts = [
        Prompt(
            id=f"hyde::{record.id}",
            system_message=config.system_message,
            user_message=_render_single(config.hyde_template, record),
            meta=record.meta.merged({"record_id": record.id, "method": "hyde"}),
        )
        for record in records
    ]
    results = llm.chat_batch(hyde_prompts)
    ok_records = []
    hypotheticals = []
    failures: dict[str, str] = {}
    for record, result in zip(records, results):
        if result.ok:
            ok_records.append(record)
            hypotheticals.append(result.text)
        else:
            failures[record.id] = f"hypothetical generation failed: {result.error}"
    retrievals = []
    contexts = []
    if ok_records:
        vectors = embedder.embed_batch([query_prefix + h for h in hypotheticals])
        for record, vec in zip(ok_records, vectors):
            result = dense_top_k(dense, vec, config.k, query_id=record.id)
            retrievals.append(result)
            contexts.append(_context_from_result(result, corpus))
    prompts = _build(ok_records, contexts, config, "hyde")
    return MethodResult(retrievals=retrievals, prompts=prompts, failures=failures)


def _render_single(template: str, record: QaRecord) -> str:
    return render_template(template, {"question": record.question})


def template_hash(template: str) -> str:
    return hashlib.sha256(template.encode("utf-8")).hexdigest()


def summarize_corpus(
    corpus: Mapping[str, Document],
    llm: InferenceClient,
    template: str,
    model_name: str,
    cache_path: str | None = None,
) -> dict[str, str]:
    """One summary per document, cached on disk keyed by model and template hash.

    Cache rows with a stale model or template hash are ignored. Any failed
    summary aborts the pass: a partially summarized corpus would skew every
    retrieval comparison built on top of it.
    """
    wanted_hash = template_hash(template)
    summaries: dict[str, str] = {}
    if cache_path and os.path.exists(cache_path):
        with open(cache_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                row = json.loads(line)
                if (
                    row.get("summarizer_model") == model_name
                    and row.get("template_hash") == wanted_hash
                    and row.get("doc_id") in corpus
                ):
                    summaries[row["doc_id"]] = row["summary_text"]
    missing = [doc_id for doc_id in corpus if doc_id not in summaries]
    if missing:
        prompts = [
            Prompt(
                id=f"sum::{doc_id}",
                system_message=DEFAULT_SYSTEM_MESSAGE,
                user_message=render_template(template, {"document": corpus[doc_id]}),
                meta=corpus[doc_id].meta.merged({"doc_id": doc_id}),
            )
            for doc_id in missing
        ]
        results = llm.chat_batch(prompts)
        failed = [doc_id for doc_id, res in zip(missing, results) if not res.ok]
        if failed:
            raise SummaryIntegrityError(
                f"summary generation failed for {len(failed)} document(s): {failed[:5]}"
            )
        for doc_id, res in zip(missing, results):
            summaries[doc_id] = res.text
        if cache_path:
            os.makedirs(os.path.dirname(cache_path) or ".", exist_ok=True)
            with open(cache_path, "w", encoding="utf-8") as fh:
                for doc_id in sorted(summaries):
                    fh.write(
                        json.dumps(
                            {
                                "doc_id": doc_id,
                                "summary_text": summaries[doc_id],
                                "summarizer_model": model_name,
                                "template_hash": wanted_hash,
                            },
                            sort_keys=True,
                        )
                        + "\n"
                    )
    logger.info("summaries ready for %d documents (%d computed)", len(summaries), len(missing))
    return summaries


def _summary_retrieve(
    records: Sequence[QaRecord],
    summary_store: VectorStore,
    embedder: InferenceClient,
    config: MethodConfig,
    query_prefix: str,
) -> list[RetrievalResult]:
    vectors = embedder.embed_batch([query_prefix + r.question for r in records])
    return [
        dense_top_k(summary_store, vec, config.k, query_id=record.id)
        for record, vec in zip(records, vectors)
    ]


def summarization_method(
    records: Sequence[QaRecord],
    summaries: Mapping[str, str],
    summary_store: VectorStore,
    embedder: InferenceClient,
    config: MethodConfig,
    query_prefix: str = "",
) -> MethodResult:
    """Retrieve over summary embeddings and prompt with the summaries themselves."""
    retrievals = _summary_retrieve(records, summary_store, embedder, config, query_prefix)
    contexts = []
    for result in retrievals:
        docs = []
        for doc_id, _ in result.ranked:
            if doc_id not in summaries:
                raise SummaryIntegrityError(f"retrieved id {doc_id!r} has no summary")
            docs.append(Document(id=doc_id, text=summaries[doc_id]))
        contexts.append(
            Context(documents=tuple(docs), scores=tuple(s for _, s in result.ranked))
        )
    prompts = _build(records, contexts, config, "summarization")
    return MethodResult(retrievals=retrievals, prompts=prompts, failures={})


def sum_context_method(
    records: Sequence[QaRecord],
    corpus: Mapping[str, Document],
    summaries: Mapping[str, str],
    summary_store: VectorStore,
    embedder: InferenceClient,
    config: MethodConfig,
    query_prefix: str = "",
) -> MethodResult:
    """Retrieve over summary embeddings but prompt with the original documents."""
    retrievals = _summary_retrieve(records, summary_store, embedder, config, query_prefix)
    contexts = []
    for result in retrievals:
        for doc_id, _ in result.ranked:
            if doc_id not in summaries:
                raise SummaryIntegrityError(f"retrieved id {doc_id!r} has no summary")
        contexts.append(_context_from_result(result, corpus))
    prompts = _build(records, contexts, config, "sum_context")
    return MethodResult(retrievals=retrievals, prompts=prompts, failures={})


MethodRunner = Callable[[MethodEnv], MethodResult]

REGISTRY: dict[str, MethodRunner] = {}
REQUIREMENTS: dict[str, frozenset[str]] = {}


def register_method(name: str, runner: MethodRunner, requires: Sequence[str] = ()) -> None:
    """Add a method to the registry. `requires` ⊆ {dense, bm25, llm, summaries}."""
    REGISTRY[name] = runner
    REQUIREMENTS[name] = frozenset(requires)


def run_method(name: str, env: MethodEnv) -> MethodResult:
    if name not in REGISTRY:
        raise FactoryError(f"unknown method {name!r}; registered: {sorted(REGISTRY)}")
    return REGISTRY[name](env)


register_method("pretrained_only", lambda env: pretrained_only(env.records, env.config))
register_method("oracle", lambda env: oracle_context(env.records, env.corpus, env.config))
register_method(
    "base_rag",
    lambda env: base_rag(
        env.records, env.corpus, env.dense, env.embedder, env.config, env.query_prefix
    ),
    requires=("dense",),
)
register_method(
    "bm25",
    lambda env: bm25_method(env.records, env.corpus, env.bm25, env.config),
    requires=("bm25",),
)
register_method(
    "hybrid_bm25",
    lambda env: hybrid_bm25_method(
        env.records, env.corpus, env.dense, env.bm25, env.embedder, env.config, env.query_prefix
    ),
    requires=("dense", "bm25"),
)
register_method(
    "reranker",
    lambda env: reranker_method(
        env.records, env.corpus, env.dense, env.embedder, env.config, env.query_prefix
    ),
    requires=("dense",),
)
register_method(
    "hyde",
    lambda env: hyde_method(
        env.records, env.corpus, env.dense, env.embedder, env.llm, env.config, env.query_prefix
    ),
    requires=("dense", "llm"),
)
register_method(
    "summarization",
    lambda env: summarization_method(
        env.records, env.summaries, env.summary_store, env.embedder, env.config, env.query_prefix
    ),
    requires=("summaries", "llm"),
)
register_method(
    "sum_context",
    lambda env: sum_context_method(
        env.records,
        env.corpus,
        env.summaries,
        env.summary_store,
        env.embedder,
        env.config,
        env.query_prefix,
    ),
    requires=("summaries", "llm"),
)

METHOD_NAMES = tuple(REGISTRY)
