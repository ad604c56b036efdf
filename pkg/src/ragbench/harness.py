"""Run orchestration: config, dataset ingestion, evaluation runs, reranker sweeps.

A run is driven by a single JSON config; every CLI flag mirrors a config
key and flags win. Runs are deterministic under mock backends and a fixed
seed: two invocations with the same config produce byte-identical row
files (timestamps live only in the report provenance block).
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
import random
import time
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

from ragbench import factory
from ragbench.factory import MethodConfig, MethodEnv, MethodResult
from ragbench.inference import (
    EchoBackend,
    HashEmbedder,
    InferenceClient,
    InferenceConfig,
    TranscriptBackend,
)
from ragbench.judge import DEFAULT_TEMPLATES, JUDGE_METRICS, judge_batch, load_templates_dir
from ragbench.manifest import Document, MetaData, QaRecord
from ragbench.metrics import (
    GENERATION_METRICS,
    RETRIEVAL_METRICS,
    score_generation,
    score_ranking,
)
from ragbench.reporting import ScoreReport, write_report_files, write_sweep_files
from ragbench.store import Bm25Index, VectorStore

logger = logging.getLogger(__name__)

DEFAULT_METRICS = ("exact_match", "token_f1", "mrr", "map", "ndcg", "recall", "hit_rate")
DEFAULT_RATIOS = (1, 2, 3, 5, 10)

KNOWN_METRICS = tuple(GENERATION_METRICS) + tuple(RETRIEVAL_METRICS) + JUDGE_METRICS


class ConfigError(Exception):
    """Bad configuration or unknown names; maps to exit code 1."""


class SchemaError(Exception):
    """A dataset file violates the JSONL schema; carries the line number."""


class DanglingGoldIdError(Exception):
    """Gold document ids that resolve to nothing in the corpus."""


_INFERENCE_KEYS = {f.name for f in dataclasses.fields(InferenceConfig)}
_METHOD_KEYS = {
    "name",
    "k",
    "reranker_ratio",
    "prompt_template",
    "prompt_template_path",
    "system_message",
    "hyde_template",
    "summarizer_template",
    "scorer",
}
_TOP_KEYS = {
    "qa_path",
    "corpus_path",
    "out_dir",
    "method",
    "metrics",
    "seed",
    "sample_size",
    "max_in_flight",
    "mock",
    "generator",
    "embedder",
    "judge",
    "embed_dim",
    "query_prefix",
    "ratios",
    "judge_templates_dir",
    "summary_cache",
    "report_formats",
}


@dataclass
class RunConfig:
    qa_path: str
    corpus_path: str
    out_dir: str = "ragbench_out"
    method: MethodConfig = field(default_factory=MethodConfig)
    metrics: tuple[str, ...] = DEFAULT_METRICS
    seed: int = 0
    sample_size: int | None = None
    max_in_flight: int = 4
    mock: str | None = None
    generator: InferenceConfig = field(default_factory=InferenceConfig)
    embedder: InferenceConfig = field(default_factory=InferenceConfig)
    judge: InferenceConfig | None = None
    embed_dim: int = 64
    query_prefix: str = ""
    ratios: tuple[int, ...] = DEFAULT_RATIOS
    judge_templates_dir: str | None = None
    summary_cache: str | None = None
    report_formats: tuple[str, ...] = ("table", "csv", "figures")

    def __post_init__(self) -> None:
        unknown = [m for m in self.metrics if m not in KNOWN_METRICS]
        if unknown:
            raise ConfigError(f"unknown metrics: {unknown}")
        if self.method.method not in factory.REGISTRY:
            raise ConfigError(
                f"unknown method {self.method.method!r}; known: {sorted(factory.REGISTRY)}"
            )
        if any(r < 1 for r in self.ratios):
            raise ConfigError(f"ratios must be positive ints, got {list(self.ratios)}")
        if self.max_in_flight < 1:
            raise ConfigError("max_in_flight must be >= 1")
        if self.sample_size is not None and self.sample_size < 1:
            raise ConfigError("sample_size must be >= 1 when set")
        judge_selected = [m for m in self.metrics if m in JUDGE_METRICS]
        if judge_selected and self.judge is None and self.mock is None:
            raise ConfigError(
                f"judge metrics {judge_selected} selected but no judge endpoint or mock configured"
            )

    @classmethod
    def from_dict(cls, blob: Mapping) -> "RunConfig":
        unknown = set(blob) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for required in ("qa_path", "corpus_path"):
            if required not in blob:
                raise ConfigError(f"config is missing required key {required!r}")
        try:
            method = _method_from_dict(blob.get("method", {}))
            generator = _inference_from_dict(blob.get("generator", {}), blob)
            embedder = _inference_from_dict(blob.get("embedder", {}), blob)
            judge = (
                _inference_from_dict(blob["judge"], blob) if blob.get("judge") is not None else None
            )
            return cls(
                qa_path=blob["qa_path"],
                corpus_path=blob["corpus_path"],
                out_dir=blob.get("out_dir", "ragbench_out"),
                method=method,
                metrics=tuple(blob.get("metrics", DEFAULT_METRICS)),
                seed=int(blob.get("seed", 0)),
                sample_size=blob.get("sample_size"),
                max_in_flight=int(blob.get("max_in_flight", 4)),
                mock=blob.get("mock"),
                generator=generator,
                embedder=embedder,
                judge=judge,
                embed_dim=int(blob.get("embed_dim", 64)),
                query_prefix=blob.get("query_prefix", ""),
                ratios=tuple(blob.get("ratios", DEFAULT_RATIOS)),
                judge_templates_dir=blob.get("judge_templates_dir"),
                summary_cache=blob.get("summary_cache"),
                report_formats=tuple(blob.get("report_formats", ("table", "csv", "figures"))),
            )
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                blob = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(blob)

    def semantic_dict(self) -> dict:
        """The fields that define the experiment; excludes output paths and
        operational knobs (concurrency, timeouts, retries) that cannot
        change results."""

        def endpoint(cfg: InferenceConfig | None) -> dict | None:
            if cfg is None:
                return None
            return {
                "base_url": cfg.base_url,
                "model_name": cfg.model_name,
                "temperature": cfg.temperature,
                "seed": cfg.seed,
            }

        return {
            "qa_path": self.qa_path,
            "corpus_path": self.corpus_path,
            "method": {
                "name": self.method.method,
                "k": self.method.k,
                "reranker_ratio": self.method.reranker_ratio,
                "prompt_template": self.method.prompt_template,
                "system_message": self.method.system_message,
                "hyde_template": self.method.hyde_template,
                "summarizer_template": self.method.summarizer_template,
                "scorer": self.method.scorer if isinstance(self.method.scorer, str) else "<custom>",
            },
            "metrics": sorted(self.metrics),
            "seed": self.seed,
            "sample_size": self.sample_size,
            "mock": self.mock,
            "generator": endpoint(self.generator),
            "embedder": endpoint(self.embedder),
            "judge": endpoint(self.judge),
            "embed_dim": self.embed_dim,
            "query_prefix": self.query_prefix,
            "judge_templates_dir": self.judge_templates_dir,
        }

    def config_hash(self) -> str:
        canonical = json.dumps(self.semantic_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _method_from_dict(blob: Mapping) -> MethodConfig:
    unknown = set(blob) - _METHOD_KEYS
    if unknown:
        raise ConfigError(f"unknown method config keys: {sorted(unknown)}")
    template = blob.get("prompt_template")
    if blob.get("prompt_template_path"):
        with open(blob["prompt_template_path"], encoding="utf-8") as fh:
            template = fh.read()
    kwargs = {
        "method": blob.get("name", "base_rag"),
        "k": int(blob.get("k", 10)),
        "reranker_ratio": int(blob.get("reranker_ratio", 1)),
        "prompt_template": template,
    }
    for key in ("system_message", "hyde_template", "summarizer_template", "scorer"):
        if key in blob:
            kwargs[key] = blob[key]
    return MethodConfig(**kwargs)


def _inference_from_dict(blob: Mapping, top: Mapping) -> InferenceConfig:
    unknown = set(blob) - _INFERENCE_KEYS
    if unknown:
        raise ConfigError(f"unknown inference config keys: {sorted(unknown)}")
    kwargs = dict(blob)
    kwargs.setdefault("max_in_flight", int(top.get("max_in_flight", 4)))
    return InferenceConfig(**kwargs)


def _read_jsonl(path: str) -> list[tuple[int, dict]]:
    rows = []
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    with fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise SchemaError(f"{path}:{line_no}: expected an object per line")
            rows.append((line_no, obj))
    return rows


def _as_str(value, where: str) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return str(value)
    raise SchemaError(f"{where}: expected a string, got {type(value).__name__}")


def ingest(qa_path: str, corpus_path: str) -> tuple[list[QaRecord], list[Document]]:
    """Load and validate the QA and corpus JSONL files.

    Corpus entries are deduplicated by id (identical text is kept once;
    conflicting text for the same id is a schema error) and every gold id
    must resolve to a corpus document.
    """
    documents: list[Document] = []
    seen: dict[str, str] = {}
    for line_no, obj in _read_jsonl(corpus_path):
        where = f"{corpus_path}:{line_no}"
        for key in ("id", "text"):
            if key not in obj:
                raise SchemaError(f"{where}: corpus line is missing {key!r}")
        doc_id = _as_str(obj["id"], where)
        text = _as_str(obj["text"], where)
        if doc_id in seen:
            if seen[doc_id] != text:
                raise SchemaError(f"{where}: duplicate id {doc_id!r} with conflicting text")
            continue
        seen[doc_id] = text
        meta = MetaData(obj.get("meta", {})) if obj.get("meta") else MetaData()
        documents.append(Document(id=doc_id, text=text, meta=meta))

    records: list[QaRecord] = []
    record_ids: set[str] = set()
    for line_no, obj in _read_jsonl(qa_path):
        where = f"{qa_path}:{line_no}"
        for key in ("id", "question", "answers", "gold_doc_ids"):
            if key not in obj:
                raise SchemaError(f"{where}: record is missing {key!r}")
        record_id = _as_str(obj["id"], where)
        if record_id in record_ids:
            raise SchemaError(f"{where}: duplicate record id {record_id!r}")
        record_ids.add(record_id)
        if not isinstance(obj["answers"], list) or not obj["answers"]:
            raise SchemaError(f"{where}: 'answers' must be a non-empty array")
        if not isinstance(obj["gold_doc_ids"], list) or not obj["gold_doc_ids"]:
            raise SchemaError(f"{where}: 'gold_doc_ids' must be a non-empty array")
        meta = MetaData(obj.get("meta", {})) if obj.get("meta") else MetaData()
        records.append(
            QaRecord(
                id=record_id,
                question=_as_str(obj["question"], where),
                answers=tuple(_as_str(a, where) for a in obj["answers"]),
                gold_doc_ids=tuple(_as_str(g, where) for g in obj["gold_doc_ids"]),
                meta=meta,
            )
        )

    dangling = sorted(
        {g for r in records for g in r.gold_doc_ids if g not in seen}
    )
    if dangling:
        raise DanglingGoldIdError(f"gold ids missing from the corpus: {dangling}")
    logger.info(
        "ingested %d records and %d unique documents", len(records), len(documents)
    )
    return records, documents


def sample_records(records: list[QaRecord], size: int | None, seed: int) -> list[QaRecord]:
    """Deterministic seeded sample, preserving original dataset order."""
    if size is None or size >= len(records):
        return records
    rng = random.Random(seed)
    keep = sorted(rng.sample(range(len(records)), size))
    return [records[i] for i in keep]


def build_clients(
    config: RunConfig,
) -> tuple[InferenceClient, InferenceClient, InferenceClient | None]:
    """(generator, embedder, judge) clients; mocks replace HTTP when configured."""
    judge_needed = config.judge is not None or any(m in JUDGE_METRICS for m in config.metrics)
    if config.mock is None:
        generator = InferenceClient(config.generator)
        embedder = InferenceClient(config.embedder)
        judge = InferenceClient(config.judge) if config.judge is not None else None
        return generator, embedder, judge
    if config.mock == "echo":
        chat_backend = EchoBackend()
    elif config.mock.startswith("transcript:"):
        chat_backend = TranscriptBackend.from_path(config.mock.split(":", 1)[1])
    else:
        raise ConfigError(f"unknown mock {config.mock!r}; expected echo or transcript:<path>")
    hash_embedder = HashEmbedder(dim=config.embed_dim)
    generator = InferenceClient(config.generator, chat_backend, hash_embedder)
    embedder = InferenceClient(config.embedder, chat_backend, hash_embedder)
    judge = (
        InferenceClient(config.judge or config.generator, chat_backend, hash_embedder)
        if judge_needed
        else None
    )
    return generator, embedder, judge


def build_env(
    config: RunConfig,
    records: list[QaRecord],
    corpus: dict[str, Document],
    embedder: InferenceClient,
    generator: InferenceClient,
) -> MethodEnv:
    """Build only the stores the selected method actually needs."""
    needs = factory.REQUIREMENTS.get(config.method.method, frozenset())
    env = MethodEnv(
        records=records,
        corpus=corpus,
        config=config.method,
        embedder=embedder,
        query_prefix=config.query_prefix,
    )
    doc_ids = list(corpus)
    if "dense" in needs:
        vectors = embedder.embed_batch([corpus[d].text for d in doc_ids])
        store = VectorStore(dim=len(vectors[0]))
        for doc_id, vec in zip(doc_ids, vectors):
            store.add(doc_id, vec)
        env.dense = store.finalize()
    if "bm25" in needs:
        index = Bm25Index()
        for doc_id in doc_ids:
            index.add(doc_id, corpus[doc_id].text)
        env.bm25 = index.finalize()
    if "llm" in needs:
        env.llm = generator
    if "summaries" in needs:
        cache_path = config.summary_cache or os.path.join(config.out_dir, "summaries.jsonl")
        env.summaries = factory.summarize_corpus(
            corpus,
            generator,
            config.method.summarizer_template,
            config.generator.model_name,
            cache_path=cache_path,
        )
        vectors = embedder.embed_batch([env.summaries[d] for d in doc_ids])
        store = VectorStore(dim=len(vectors[0]))
        for doc_id, vec in zip(doc_ids, vectors):
            store.add(doc_id, vec)
        env.summary_store = store.finalize()
    return env


def _score_records(
    records: Sequence[QaRecord],
    method_name: str,
    method_result: MethodResult,
    generations: Mapping[str, object],
    gen_metrics: Sequence[str],
    ret_metrics: Sequence[str],
    k: int,
) -> list[dict]:
    """One row per input record, in dataset order."""
    retrieval_by_id = {
        rr.query_id: rr for rr in (method_result.retrievals or [])
    }
    retrieval_applicable = method_result.retrievals is not None
    rows = []
    for record in records:
        row: dict = {"record_id": record.id, "method": method_name}
        if record.id in method_result.failures:
            row.update(
                {
                    "error": method_result.failures[record.id],
                    "generation": None,
                    "retrieved_ids": None,
                    "scores": {},
                }
            )
            rows.append(row)
            continue
        scores: dict[str, float] = {}
        result = retrieval_by_id.get(record.id)
        row["retrieved_ids"] = list(result.ids) if result is not None else None
        if retrieval_applicable and result is not None and ret_metrics:
            scores.update(score_ranking(result.ids, record.gold_doc_ids, k, ret_metrics))
        generation = generations.get(record.id)
        if generation is None:
            row["generation"] = None
            row["error"] = "no generation result"
        elif generation.ok:
            row["generation"] = generation.text
            row["error"] = None
            if gen_metrics:
                scores.update(score_generation(generation.text, record.answers, gen_metrics))
        else:
            row["generation"] = None
            row["error"] = f"generation failed: {generation.error}"
        row["scores"] = scores
        rows.append(row)
    return rows


def _mean_scores(rows: Sequence[Mapping]) -> dict[str, float]:
    sums: dict[str, list[float]] = {}
    for row in rows:
        for name, value in row.get("scores", {}).items():
            sums.setdefault(name, []).append(float(value))
    return {name: sum(values) / len(values) for name, values in sums.items()}


def run_evaluation(config: RunConfig) -> ScoreReport:
    """Execute ingest -> store build -> method -> generation -> metrics -> report."""
    started = time.time()
    records, corpus_list = ingest(config.qa_path, config.corpus_path)
    corpus = {d.id: d for d in corpus_list}
    records = sample_records(records, config.sample_size, config.seed)
    if not records:
        raise ConfigError("no records to evaluate")
    generator, embedder, judge_client = build_clients(config)
    env = build_env(config, records, corpus, embedder, generator)
    method_name = config.method.method
    method_result = factory.run_method(method_name, env)

    generations: dict[str, object] = {}
    if len(method_result.prompts):
        for result in generator.chat_batch(method_result.prompts):
            generations[result.prompt_id] = result

    gen_metrics = [m for m in config.metrics if m in GENERATION_METRICS]
    ret_metrics = [m for m in config.metrics if m in RETRIEVAL_METRICS]
    judge_metrics = [m for m in config.metrics if m in JUDGE_METRICS]

    rows = _score_records(
        records, method_name, method_result, generations, gen_metrics, ret_metrics, config.method.k
    )

    judge_aggregates: dict[str, dict] = {}
    if judge_metrics:
        if judge_client is None:
            raise ConfigError("judge metrics selected but no judge client available")
        templates_map = (
            load_templates_dir(config.judge_templates_dir)
            if config.judge_templates_dir
            else DEFAULT_TEMPLATES
        )
        templates = [templates_map[name] for name in judge_metrics]
        prompt_by_id = {p.id: p for p in method_result.prompts}
        judged_records = [
            r
            for r in records
            if r.id in generations and generations[r.id].ok and r.id in prompt_by_id
        ]
        if judged_records:
            verdicts, judge_aggregates = judge_batch(
                templates,
                judged_records,
                [generations[r.id].text for r in judged_records],
                [prompt_by_id[r.id].context for r in judged_records],
                judge_client,
            )
            by_record: dict[str, dict] = {}
            for verdict in verdicts:
                by_record.setdefault(verdict.record_id, {})[verdict.metric_name] = {
                    "score": verdict.score,
                    "parse_ok": verdict.parse_ok,
                }
            for row in rows:
                if row["record_id"] in by_record:
                    row["judge"] = by_record[row["record_id"]]

    aggregates: dict = {"metrics": _mean_scores(rows)}
    not_applicable = sorted(ret_metrics) if method_result.retrievals is None else []
    if not_applicable:
        aggregates["not_applicable"] = not_applicable
    aggregates["counts"] = {
        "records": len(records),
        "method_failures": len(method_result.failures),
        "generation_failures": sum(
            1 for row in rows if row.get("error") and row["record_id"] not in method_result.failures
        ),
    }
    if judge_aggregates:
        aggregates["judge"] = judge_aggregates

    provenance = {
        "config_hash": config.config_hash(),
        "method": method_name,
        "k": config.method.k,
        "seed": config.seed,
        "sample_size": config.sample_size,
        "models": {
            "generator": config.generator.model_name,
            "embedder": config.embedder.model_name,
            "judge": config.judge.model_name if config.judge else None,
        },
        "created_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(started)),
    }
    report = ScoreReport(rows=rows, aggregates=aggregates, provenance=provenance)
    write_report_files(report, config.out_dir, config.report_formats)
    logger.info("run complete: %d rows in %s", len(rows), config.out_dir)
    return report


def _sweep_phase(
    config: RunConfig,
    method_config: MethodConfig,
    records: list[QaRecord],
    corpus: dict[str, Document],
    env: MethodEnv,
    generator: InferenceClient,
    gen_metrics: Sequence[str],
    ret_metrics: Sequence[str],
) -> tuple[dict[str, float], set[int]]:
    """Run one method variant and return (metric means, observed fetch depths)."""
    env.config = method_config
    log_start = len(env.dense.query_log)
    method_result = factory.run_method(method_config.method, env)
    observed = set(env.dense.query_log[log_start:])
    generations: dict[str, object] = {}
    if len(method_result.prompts):
        for result in generator.chat_batch(method_result.prompts):
            generations[result.prompt_id] = result
    rows = _score_records(
        records,
        method_config.method,
        method_result,
        generations,
        gen_metrics,
        ret_metrics,
        method_config.k,
    )
    return _mean_scores(rows), observed


def sweep_reranker(config: RunConfig, ratios: Sequence[int] | None = None) -> dict:
    """Run base_rag once, then the reranker at each ratio on the same sample.

    Emits the per-ratio percentage change against base for every generator
    and retrieval metric, alongside the candidate depths the store actually
    served (instrumented via the store's query log).
    """
    ratios = tuple(ratios) if ratios is not None else tuple(config.ratios)
    if not ratios or any(r < 1 for r in ratios):
        raise ConfigError(f"ratios must be positive ints, got {list(ratios)}")
    records, corpus_list = ingest(config.qa_path, config.corpus_path)
    corpus = {d.id: d for d in corpus_list}
    records = sample_records(records, config.sample_size, config.seed)
    if not records:
        raise ConfigError("no records to evaluate")
    generator, embedder, _ = build_clients(config)

    base_config = dataclasses.replace(config.method, method="base_rag")
    dense_config = dataclasses.replace(config, method=base_config)
    env = build_env(dense_config, records, corpus, embedder, generator)

    gen_metrics = [m for m in config.metrics if m in GENERATION_METRICS]
    ret_metrics = [m for m in config.metrics if m in RETRIEVAL_METRICS]

    base_metrics, base_observed = _sweep_phase(
        config, base_config, records, corpus, env, generator, gen_metrics, ret_metrics
    )

    entries = []
    for ratio in ratios:
        ratio_config = dataclasses.replace(
            config.method, method="reranker", reranker_ratio=ratio
        )
        ratio_metrics, observed = _sweep_phase(
            config, ratio_config, records, corpus, env, generator, gen_metrics, ret_metrics
        )
        deltas: dict[str, float | None] = {}
        for name, base_value in base_metrics.items():
            value = ratio_metrics.get(name)
            if value is None:
                deltas[name] = None
            elif base_value == 0.0:
                deltas[name] = 0.0 if value == 0.0 else None
            else:
                deltas[name] = (value - base_value) / base_value * 100.0
        entries.append(
            {
                "ratio": ratio,
                "requested_depth": config.method.k * ratio,
                "observed_fetch_sizes": sorted(observed),
                "metrics": ratio_metrics,
                "deltas_pct": deltas,
            }
        )

    sweep = {
        "seed": config.seed,
        "sample_size": len(records),
        "k": config.method.k,
        "scorer": config.method.scorer if isinstance(config.method.scorer, str) else "<custom>",
        "base": {"metrics": base_metrics, "observed_fetch_sizes": sorted(base_observed)},
        "entries": entries,
        "provenance": {
            "config_hash": config.config_hash(),
            "ratios": list(ratios),
            "created_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        },
    }
    write_sweep_files(sweep, config.out_dir, config.report_formats)
    return sweep


def build_store_snapshot(config: RunConfig, path: str) -> dict:
    """Build dense + BM25 indexes over the corpus and persist one snapshot."""
    from ragbench.store import save_snapshot

    _, corpus_list = ingest(config.qa_path, config.corpus_path)
    _, embedder, _ = build_clients(config)
    vectors = embedder.embed_batch([d.text for d in corpus_list])
    store = VectorStore(dim=len(vectors[0]))
    for doc, vec in zip(corpus_list, vectors):
        store.add(doc.id, vec)
    store.finalize()
    index = Bm25Index()
    for doc in corpus_list:
        index.add(doc.id, doc.text)
    index.finalize()
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    save_snapshot(path, store=store, index=index)
    return {"documents": len(corpus_list), "dim": store.dim, "path": path}
