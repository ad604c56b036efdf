"""Typed data model for QA evaluation runs and the minimal prompt template language.

All types here are immutable after construction and safe to share across
threads; rendering is stateless and reentrant.

The template language supports exactly two constructs:

* interpolation: ``{{ name }}`` or ``{{ name.field }}`` (one level deep)
* loops: ``{% for item in items %}...{% endfor %}``

Undefined variables are a hard error, never silent empty-string
substitution: a corrupted prompt is worse than a failed run.
"""
from __future__ import annotations

import re
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

MetaValue = str | int | float | bool


class TemplateError(Exception):
    """Base class for template rendering failures."""


class TemplateSyntaxError(TemplateError):
    """Unbalanced or malformed template markers."""


class UnknownVariableError(TemplateError):
    """A name or field referenced by the template is not bound."""


class LengthMismatchError(ValueError):
    """Positionally paired lists have different lengths."""


def _check_meta(entries: Mapping[str, MetaValue]) -> dict[str, MetaValue]:
    out: dict[str, MetaValue] = {}
    for key, value in entries.items():
        if not isinstance(key, str) or not key:
            raise ValueError(f"metadata keys must be non-empty strings, got {key!r}")
        if not isinstance(value, (str, int, float, bool)):
            raise ValueError(f"metadata value for {key!r} must be str/number/bool, got {type(value).__name__}")
        out[key] = value
    return out


@dataclass(frozen=True)
class MetaData:
    """Auxiliary key-value info. Never consulted by retrieval or scoring."""

    entries: Mapping[str, MetaValue] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", _check_meta(self.entries))

    def get(self, key: str, default: MetaValue | None = None) -> MetaValue | None:
        return self.entries.get(key, default)

    def merged(self, extra: Mapping[str, MetaValue]) -> "MetaData":
        combined = dict(self.entries)
        combined.update(extra)
        return MetaData(combined)


EMPTY_META = MetaData()


@dataclass(frozen=True)
class Document:
    """One retrievable unit of text with a corpus-unique id."""

    id: str
    text: str
    meta: MetaData = EMPTY_META

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("document id must be non-empty")
        if len(self.text) < 1:
            raise ValueError(f"document {self.id!r} has empty text")


@dataclass(frozen=True)
class Context:
    """An ordered bundle of documents, optionally with parallel retrieval scores."""

    documents: tuple[Document, ...] = ()
    scores: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "documents", tuple(self.documents))
        if self.scores is not None:
            object.__setattr__(self, "scores", tuple(float(s) for s in self.scores))
            if len(self.scores) != len(self.documents):
                raise ValueError("scores must be parallel to documents")
        ids = [d.id for d in self.documents]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate document ids within one context: {ids}")

    def __len__(self) -> int:
        return len(self.documents)


@dataclass(frozen=True)
class Prompt:
    """A fully rendered system+user message pair, traceable via meta."""

    id: str
    system_message: str
    user_message: str
    context: Context = Context()
    meta: MetaData = EMPTY_META

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("prompt id must be non-empty")


@dataclass(frozen=True)
class PromptCollection:
    """Ordered prompts built from one shared template."""

    prompts: tuple[Prompt, ...]
    template_source: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "prompts", tuple(self.prompts))
        ids = [p.id for p in self.prompts]
        if len(set(ids)) != len(ids):
            raise ValueError("prompt ids within a collection must be distinct")

    def __len__(self) -> int:
        return len(self.prompts)

    def __iter__(self):
        return iter(self.prompts)

    def __getitem__(self, index: int) -> Prompt:
        return self.prompts[index]


@dataclass(frozen=True)
class QaRecord:
    """One (question, reference answers, gold document ids) triple."""

    id: str
    question: str
    answers: tuple[str, ...]
    gold_doc_ids: tuple[str, ...]
    meta: MetaData = EMPTY_META

    def __post_init__(self) -> None:
        object.__setattr__(self, "answers", tuple(self.answers))
        object.__setattr__(self, "gold_doc_ids", tuple(self.gold_doc_ids))
        if not self.id:
            raise ValueError("record id must be non-empty")
        if not self.answers:
            raise ValueError(f"record {self.id!r} has no reference answers")
        if not self.gold_doc_ids:
            raise ValueError(f"record {self.id!r} has no gold document ids")


_NAME = r"[A-Za-z_][A-Za-z0-9_]*"
_INTERP_RE = re.compile(r"\{\{\s*(%s)(?:\.(%s))?\s*\}\}" % (_NAME, _NAME))
_FOR_RE = re.compile(r"\{%% for (%s) in (%s) %%\}" % (_NAME, _NAME))
_ENDFOR = "{% endfor %}"


def _resolve(name: str, fld: str | None, bindings: Mapping[str, object]) -> str:
    if name not in bindings:
        raise UnknownVariableError(f"template references unbound name {name!r}")
    value = bindings[name]
    if fld is not None:
        if isinstance(value, Mapping):
            if fld not in value:
                raise UnknownVariableError(f"template references unknown field {name}.{fld}")
            value = value[fld]
        elif hasattr(value, fld):
            value = getattr(value, fld)
        else:
            raise UnknownVariableError(f"template references unknown field {name}.{fld}")
    return value if isinstance(value, str) else str(value)


def _find_endfor(template: str, start: int) -> int:
    """Index of the endfor matching the for-block whose body starts at `start`."""
    depth = 1
    pos = start
    while True:
        tag = template.find("{%", pos)
        if tag == -1:
            raise TemplateSyntaxError("for block without matching endfor")
        if template.startswith(_ENDFOR, tag):
            depth -= 1
            if depth == 0:
                return tag
            pos = tag + len(_ENDFOR)
            continue
        m = _FOR_RE.match(template, tag)
        if m is None:
            raise TemplateSyntaxError(f"malformed block tag at offset {tag}")
        depth += 1
        pos = m.end()


def _render(template: str, bindings: Mapping[str, object]) -> str:
    out: list[str] = []
    pos = 0
    n = len(template)
    while pos < n:
        open_interp = template.find("{{", pos)
        open_block = template.find("{%", pos)
        starts = [i for i in (open_interp, open_block) if i != -1]
        if not starts:
            out.append(template[pos:])
            break
        nxt = min(starts)
        out.append(template[pos:nxt])
        if nxt == open_interp and (open_block == -1 or open_interp < open_block):
            m = _INTERP_RE.match(template, nxt)
            if m is None:
                raise TemplateSyntaxError(f"malformed interpolation at offset {nxt}")
            out.append(_resolve(m.group(1), m.group(2), bindings))
            pos = m.end()
        else:
            if template.startswith(_ENDFOR, nxt):
                raise TemplateSyntaxError("endfor without matching for")
            m = _FOR_RE.match(template, nxt)
            if m is None:
                raise TemplateSyntaxError(f"malformed block tag at offset {nxt}")
            loop_var, list_name = m.group(1), m.group(2)
            body_start = m.end()
            body_end = _find_endfor(template, body_start)
            if list_name not in bindings:
                raise UnknownVariableError(f"template references unbound name {list_name!r}")
            seq = bindings[list_name]
            if not isinstance(seq, Sequence) or isinstance(seq, (str, bytes)):
                raise TypeError(f"loop variable {list_name!r} is not a list")
            body = template[body_start:body_end]
            inner = dict(bindings)
            for item in seq:
                inner[loop_var] = item
                out.append(_render(body, inner))
            pos = body_end + len(_ENDFOR)
    return "".join(out)


def render_template(template: str, bindings: Mapping[str, object]) -> str:
    """Render `template` against `bindings`.

    Every interpolation is replaced by its bound value and every loop body
    is expanded once per list element, in list order. Raises
    UnknownVariableError for unbound names and TemplateSyntaxError for
    unbalanced or malformed markers.
    """
    return _render(template, bindings)


def template_variables(template: str) -> set[str]:
    """Top-level names a template reads (loop-local variables excluded)."""
    return _collect_vars(template, frozenset())


def _collect_vars(template: str, local: frozenset[str]) -> set[str]:
    names: set[str] = set()
    pos = 0
    n = len(template)
    while pos < n:
        open_interp = template.find("{{", pos)
        open_block = template.find("{%", pos)
        starts = [i for i in (open_interp, open_block) if i != -1]
        if not starts:
            break
        nxt = min(starts)
        if nxt == open_interp and (open_block == -1 or open_interp < open_block):
            m = _INTERP_RE.match(template, nxt)
            if m is None:
                raise TemplateSyntaxError(f"malformed interpolation at offset {nxt}")
            if m.group(1) not in local:
                names.add(m.group(1))
            pos = m.end()
        else:
            if template.startswith(_ENDFOR, nxt):
                raise TemplateSyntaxError("endfor without matching for")
            m = _FOR_RE.match(template, nxt)
            if m is None:
                raise TemplateSyntaxError(f"malformed block tag at offset {nxt}")
            loop_var, list_name = m.group(1), m.group(2)
            if list_name not in local:
                names.add(list_name)
            body_start = m.end()
            body_end = _find_endfor(template, body_start)
            names |= _collect_vars(template[body_start:body_end], local | {loop_var})
            pos = body_end + len(_ENDFOR)
    return names


def build_prompt_collection(
    records: Sequence[QaRecord],
    contexts: Sequence[Context],
    template: str,
    system: str,
    method_name: str = "",
) -> PromptCollection:
    """Build one prompt per record, pairing records and contexts positionally.

    Bindings expose ``question`` and ``documents``; each prompt's meta
    carries the source record id (and the record's own meta entries) so a
    score can always be traced back to exactly one record.
    """
    if len(records) != len(contexts):
        raise LengthMismatchError(
            f"got {len(records)} records but {len(contexts)} contexts"
        )
    prompts = []
    for record, context in zip(records, contexts):
        bindings = {"question": record.question, "documents": list(context.documents)}
        try:
            user_message = render_template(template, bindings)
        except TemplateError as exc:
            raise type(exc)(f"record {record.id!r}: {exc}") from exc
        meta = record.meta.merged({"record_id": record.id, "method": method_name})
        prompts.append(
            Prompt(
                id=record.id,
                system_message=system,
                user_message=user_message,
                context=context,
                meta=meta,
            )
        )
    return PromptCollection(prompts=tuple(prompts), template_source=template)
