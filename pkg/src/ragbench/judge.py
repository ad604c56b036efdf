"""LLM-as-a-judge metrics with customizable prompt templates.

Six metrics ship with default templates: answer_relevance,
answer_faithfulness, non_answer_critic, answer_similarity, context_recall,
and context_precision. Every template must make the judge end its reply
with a line ``SCORE: <int>``; parsing extracts the last such line, so
free-form reasoning above it is fine. Judge prompts are built
deterministically (identical template + fields give a byte-identical
prompt) with ids of the form ``<record_id>::<metric_name>``, which is also
the key a transcript mock should use.
"""
from __future__ import annotations

import json
import os
import re
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

from ragbench.inference import InferenceClient
from ragbench.manifest import (
    Context,
    MetaData,
    Prompt,
    QaRecord,
    render_template,
    template_variables,
)

SCALE_BINARY = "binary"
SCALE_FIVE_POINT = "five_point"

METRIC_FIELDS: dict[str, tuple[str, ...]] = {
    "answer_relevance": ("question", "answer"),
    "answer_faithfulness": ("answer", "context"),
    "non_answer_critic": ("question", "answer"),
    "answer_similarity": ("answer", "reference"),
    "context_recall": ("context", "reference"),
    "context_precision": ("question", "context"),
}
JUDGE_METRICS = tuple(METRIC_FIELDS)

JUDGE_SYSTEM_MESSAGE = "You are a strict, impartial evaluator of question answering systems."
RETRY_NUDGE = "\nRespond with SCORE: <n> only."

_SCORE_LINE_RE = re.compile(r"^\s*SCORE:\s*(-?\d+)\s*$")


class JudgeError(Exception):
    pass


@dataclass(frozen=True)
class JudgeTemplate:
    """A rubric prompt for one judge metric."""

    metric_name: str
    template: str
    scale: str
    few_shot_examples: tuple[tuple[Mapping[str, str], int], ...] = ()

    def __post_init__(self) -> None:
        if self.metric_name not in METRIC_FIELDS:
            raise JudgeError(f"unknown judge metric {self.metric_name!r}")
        if self.scale not in (SCALE_BINARY, SCALE_FIVE_POINT):
            raise JudgeError(f"unknown scale {self.scale!r}")
        allowed = set(METRIC_FIELDS[self.metric_name])
        used = template_variables(self.template)
        extra = used - allowed
        if extra:
            raise JudgeError(
                f"template for {self.metric_name} references undefined placeholders: {sorted(extra)}"
            )
        for fields, verdict in self.few_shot_examples:
            if _normalize_verdict(verdict, self.scale) is None:
                raise JudgeError(
                    f"few-shot verdict {verdict} is outside the {self.scale} scale"
                )


@dataclass(frozen=True)
class JudgeVerdict:
    """One judge reply, parsed. Unparsed verdicts carry score=None."""

    record_id: str
    metric_name: str
    raw_judge_output: str
    score: float | None
    parse_ok: bool


def _normalize_verdict(value: int, scale: str) -> float | None:
    if scale == SCALE_BINARY:
        return float(value) if value in (0, 1) else None
    return (value - 1) / 4.0 if 1 <= value <= 5 else None


def parse_verdict(raw: str, scale: str) -> tuple[float | None, bool]:
    """Extract the last ``SCORE: <int>`` line and normalize it to [0, 1]."""
    for line in reversed(raw.splitlines()):
        m = _SCORE_LINE_RE.match(line)
        if m:
            score = _normalize_verdict(int(m.group(1)), scale)
            return (score, True) if score is not None else (None, False)
    return None, False


def build_judge_prompt(
    template: JudgeTemplate, fields: Mapping[str, str], record_id: str
) -> Prompt:
    """Render the judge prompt, prepending serialized few-shot examples."""
    parts: list[str] = []
    for example_fields, verdict in template.few_shot_examples:
        parts.append("Example:")
        parts.append(render_template(template.template, example_fields))
        parts.append(f"SCORE: {verdict}")
        parts.append("")
    if parts:
        parts.append("Now evaluate:")
    parts.append(render_template(template.template, fields))
    return Prompt(
        id=f"{record_id}::{template.metric_name}",
        system_message=JUDGE_SYSTEM_MESSAGE,
        user_message="\n".join(parts),
        context=Context(),
        meta=MetaData({"record_id": record_id, "judge_metric": template.metric_name}),
    )


def judge_score(
    template: JudgeTemplate,
    fields: Mapping[str, str],
    judge_llm: InferenceClient,
    record_id: str = "",
) -> JudgeVerdict:
    """Run one judge call (plus one nudged retry on parse failure)."""
    prompt = build_judge_prompt(template, fields, record_id)
    result = judge_llm.chat_batch([prompt])[0]
    raw = result.text if result.ok else f"<error: {result.error}>"
    score, parse_ok = parse_verdict(result.text, template.scale) if result.ok else (None, False)
    if not parse_ok:
        retry_prompt = Prompt(
            id=prompt.id,
            system_message=prompt.system_message,
            user_message=prompt.user_message + RETRY_NUDGE,
            context=prompt.context,
            meta=prompt.meta,
        )
        retry = judge_llm.chat_batch([retry_prompt])[0]
        if retry.ok:
            raw = retry.text
            score, parse_ok = parse_verdict(retry.text, template.scale)
    return JudgeVerdict(
        record_id=record_id,
        metric_name=template.metric_name,
        raw_judge_output=raw,
        score=score,
        parse_ok=parse_ok,
    )


def judge_fields(record: QaRecord, generation_text: str, context: Context) -> dict[str, str]:
    """Placeholder bindings for one record. `reference` is the first answer."""
    return {
        "question": record.question,
        "answer": generation_text,
        "reference": record.answers[0],
        "context": "\n\n".join(d.text for d in context.documents),
    }


def judge_batch(
    templates: Sequence[JudgeTemplate],
    records: Sequence[QaRecord],
    generations: Sequence[str],
    contexts: Sequence[Context],
    judge_llm: InferenceClient,
) -> tuple[list[JudgeVerdict], dict[str, dict[str, float]]]:
    """One verdict per (record, metric), with per-metric aggregates.

    Aggregates average only parsed verdicts; unparsed ones are counted into
    a per-metric failure rate instead of silently shifting the mean.
    """
    if not records:
        raise ValueError("records must be non-empty")
    if not (len(records) == len(generations) == len(contexts)):
        raise ValueError("records, generations, and contexts must be parallel")
    jobs: list[tuple[QaRecord, JudgeTemplate, Prompt]] = []
    for record, generation, context in zip(records, generations, contexts):
        fields = judge_fields(record, generation, context)
        for template in templates:
            jobs.append((record, template, build_judge_prompt(template, fields, record.id)))
    results = judge_llm.chat_batch([prompt for _, _, prompt in jobs])

    verdicts: list[JudgeVerdict | None] = [None] * len(jobs)
    retry_indexes: list[int] = []
    for i, ((record, template, prompt), result) in enumerate(zip(jobs, results)):
        if result.ok:
            score, parse_ok = parse_verdict(result.text, template.scale)
            raw = result.text
        else:
            score, parse_ok, raw = None, False, f"<error: {result.error}>"
        if parse_ok:
            verdicts[i] = JudgeVerdict(record.id, template.metric_name, raw, score, True)
        else:
            retry_indexes.append(i)

    if retry_indexes:
        retry_prompts = []
        for i in retry_indexes:
            _, template, prompt = jobs[i]
            retry_prompts.append(
                Prompt(
                    id=prompt.id,
                    system_message=prompt.system_message,
                    user_message=prompt.user_message + RETRY_NUDGE,
                    context=prompt.context,
                    meta=prompt.meta,
                )
            )
        retry_results = judge_llm.chat_batch(retry_prompts)
        for i, result in zip(retry_indexes, retry_results):
            record, template, _ = jobs[i]
            if result.ok:
                score, parse_ok = parse_verdict(result.text, template.scale)
                raw = result.text
            else:
                score, parse_ok, raw = None, False, f"<error: {result.error}>"
            verdicts[i] = JudgeVerdict(record.id, template.metric_name, raw, score, parse_ok)

    final: list[JudgeVerdict] = [v for v in verdicts if v is not None]
    aggregates: dict[str, dict[str, float]] = {}
    for template in templates:
        per_metric = [v for v in final if v.metric_name == template.metric_name]
        parsed = [v.score for v in per_metric if v.parse_ok]
        failures = len(per_metric) - len(parsed)
        aggregates[template.metric_name] = {
            "mean": sum(parsed) / len(parsed) if parsed else None,
            "parsed": len(parsed),
            "failures": failures,
            "failure_rate": failures / len(per_metric) if per_metric else 0.0,
        }
    return final, aggregates


_SCORE_CONTRACT_5 = (
    "Think step by step, then end your reply with a final line of the form\n"
    "SCORE: <n>\nwhere <n> is an integer from 1 (worst) to 5 (best)."
)
_SCORE_CONTRACT_BINARY = (
    "Think step by step, then end your reply with a final line of the form\n"
    "SCORE: <n>\nwhere <n> is 0 or 1."
)

DEFAULT_TEMPLATES: dict[str, JudgeTemplate] = {
    "answer_relevance": JudgeTemplate(
        metric_name="answer_relevance",
        scale=SCALE_FIVE_POINT,
        template=(
            "Rate how well the answer addresses the question.\n\n"
            "Question: {{ question }}\n"
            "Answer: {{ answer }}\n\n"
            "A 1 means the answer ignores the question entirely; a 5 means it\n"
            "addresses the question fully and directly.\n" + _SCORE_CONTRACT_5
        ),
    ),
    "answer_faithfulness": JudgeTemplate(
        metric_name="answer_faithfulness",
        scale=SCALE_FIVE_POINT,
        template=(
            "Rate the factual consistency of the answer with the context.\n\n"
            "Context:\n{{ context }}\n\n"
            "Answer: {{ answer }}\n\n"
            "A 1 means the answer contradicts or invents facts beyond the\n"
            "context; a 5 means every claim is supported by the context.\n" + _SCORE_CONTRACT_5
        ),
    ),
    "non_answer_critic": JudgeTemplate(
        metric_name="non_answer_critic",
        scale=SCALE_BINARY,
        template=(
            "Decide whether the answer fails to provide a meaningful response\n"
            "(refusals, 'I don't know', empty filler).\n\n"
            "Question: {{ question }}\n"
            "Answer: {{ answer }}\n\n"
            "Reply 1 if the answer is a non-answer, 0 if it makes a genuine\n"
            "attempt.\n" + _SCORE_CONTRACT_BINARY
        ),
    ),
    "answer_similarity": JudgeTemplate(
        metric_name="answer_similarity",
        scale=SCALE_FIVE_POINT,
        template=(
            "Compare the generated answer to the reference answer.\n\n"
            "Reference: {{ reference }}\n"
            "Answer: {{ answer }}\n\n"
            "A 1 means they disagree completely; a 5 means they convey the\n"
            "same information.\n" + _SCORE_CONTRACT_5
        ),
    ),
    "context_recall": JudgeTemplate(
        metric_name="context_recall",
        scale=SCALE_FIVE_POINT,
        template=(
            "Rate how well the retrieved context supports the reference answer.\n\n"
            "Context:\n{{ context }}\n\n"
            "Reference answer: {{ reference }}\n\n"
            "A 1 means the context contains none of the needed information; a\n"
            "5 means it contains everything required.\n" + _SCORE_CONTRACT_5
        ),
    ),
    "context_precision": JudgeTemplate(
        metric_name="context_precision",
        scale=SCALE_FIVE_POINT,
        template=(
            "Rate how much of the retrieved context is relevant to answering\n"
            "the question.\n\n"
            "Question: {{ question }}\n\n"
            "Context:\n{{ context }}\n\n"
            "A 1 means the context is entirely off-topic; a 5 means all of it\n"
            "is relevant.\n" + _SCORE_CONTRACT_5
        ),
    ),
}


def template_to_dict(template: JudgeTemplate) -> dict:
    return {
        "metric_name": template.metric_name,
        "scale": template.scale,
        "template": template.template,
        "few_shot_examples": [
            {"fields": dict(fields), "verdict": verdict}
            for fields, verdict in template.few_shot_examples
        ],
    }


def template_from_dict(blob: Mapping) -> JudgeTemplate:
    return JudgeTemplate(
        metric_name=blob["metric_name"],
        scale=blob["scale"],
        template=blob["template"],
        few_shot_examples=tuple(
            (dict(example["fields"]), int(example["verdict"]))
            for example in blob.get("few_shot_examples", ())
        ),
    )


def dump_templates(out_dir: str) -> list[str]:
    """Write every default template as <metric>.json for user customization."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for name, template in DEFAULT_TEMPLATES.items():
        path = os.path.join(out_dir, f"{name}.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(template_to_dict(template), fh, indent=2, sort_keys=True)
            fh.write("\n")
        written.append(path)
    return written


def load_template(path: str) -> JudgeTemplate:
    with open(path, encoding="utf-8") as fh:
        return template_from_dict(json.load(fh))


def load_templates_dir(templates_dir: str) -> dict[str, JudgeTemplate]:
    """Defaults overlaid with any <metric>.json files found in `templates_dir`."""
    templates = dict(DEFAULT_TEMPLATES)
    for name in JUDGE_METRICS:
        path = os.path.join(templates_dir, f"{name}.json")
        if os.path.exists(path):
            templates[name] = load_template(path)
    return templates
