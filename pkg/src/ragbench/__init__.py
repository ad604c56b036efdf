"""ragbench: a benchmark harness for retrieval-augmented generation.

Standardizes QA datasets into a typed manifest, runs nine retrieval
strategies over an in-process store and an OpenAI-compatible inference
layer, and scores the results with generator, retrieval, and LLM-judge
metrics.
"""
from ragbench.factory import (
    MethodConfig,
    MethodEnv,
    MethodResult,
    register_method,
    run_method,
)
from ragbench.harness import RunConfig, ingest, run_evaluation, sweep_reranker
from ragbench.inference import (
    EchoBackend,
    GenerationResult,
    HashEmbedder,
    InferenceClient,
    InferenceConfig,
    TranscriptBackend,
)
from ragbench.judge import JudgeTemplate, JudgeVerdict, judge_batch, judge_score
from ragbench.manifest import (
    Context,
    Document,
    MetaData,
    Prompt,
    PromptCollection,
    QaRecord,
    build_prompt_collection,
    render_template,
)
from ragbench.reporting import ScoreReport
from ragbench.store import (
    Bm25Index,
    RetrievalResult,
    VectorStore,
    bm25_top_k,
    dense_top_k,
    hybrid_fuse,
    rerank,
)

__version__ = "0.1.0"

__all__ = [
    "Bm25Index",
    "Context",
    "Document",
    "EchoBackend",
    "GenerationResult",
    "HashEmbedder",
    "InferenceClient",
    "InferenceConfig",
    "JudgeTemplate",
    "JudgeVerdict",
    "MetaData",
    "MethodConfig",
    "MethodEnv",
    "MethodResult",
    "Prompt",
    "PromptCollection",
    "QaRecord",
    "RetrievalResult",
    "RunConfig",
    "ScoreReport",
    "TranscriptBackend",
    "VectorStore",
    "bm25_top_k",
    "build_prompt_collection",
    "dense_top_k",
    "hybrid_fuse",
    "ingest",
    "judge_batch",
    "judge_score",
    "register_method",
    "render_template",
    "rerank",
    "run_evaluation",
    "run_method",
    "sweep_reranker",
]
