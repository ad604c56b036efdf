"""End-to-end answer metrics: exact match, number match, token P/R/F1, BLEU, ROUGE, GLEU.

All functions are pure, return values in [0, 1], and take one prediction
against a non-empty list of references (multi-reference scores never
decrease when a reference is added).

Two tokenizations are in play, on purpose:

* exact match and token P/R/F1 use the extractive-QA normalization
  (lowercase, strip punctuation, drop a/an/the, collapse whitespace);
* BLEU/ROUGE/GLEU use plain lowercase + whitespace tokens, keeping
  content words intact as the n-gram metrics conventionally do.
"""
from __future__ import annotations

import math
import re
import string
from collections import Counter
from collections.abc import Iterable, Sequence
from decimal import Decimal

_ARTICLE_RE = re.compile(r"\b(a|an|the)\b")
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)
_NUMBER_RE = re.compile(r"[-+]?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?|[-+]?\.\d+")

NUMBER_TOLERANCE = Decimal("0.005")  # exclusive bound


def normalize_answer(text: str) -> str:
    """Lowercase, strip punctuation, drop articles, collapse whitespace."""
    text = text.lower().translate(_PUNCT_TABLE)
    text = _ARTICLE_RE.sub(" ", text)
    return " ".join(text.split())


def _qa_tokens(text: str) -> list[str]:
    return normalize_answer(text).split()


def _ngram_tokens(text: str) -> list[str]:
    return text.lower().split()


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def exact_match(pred: str, refs: Sequence[str]) -> int:
    """1 iff the normalized prediction equals some normalized reference."""
    _require_refs(refs)
    norm = normalize_answer(pred)
    return int(any(norm == normalize_answer(r) for r in refs))


def _last_number_literal(text: str) -> str | None:
    matches = _NUMBER_RE.findall(text)
    if not matches:
        return None
    return matches[-1].replace(",", "")


def last_number(text: str) -> float | None:
    """The last numeric literal in `text`, or None.

    Signs and decimals are honored, thousands separators stripped, and a
    trailing percent sign ignored (scale alignment is number_match's job).
    """
    literal = _last_number_literal(text)
    return float(literal) if literal is not None else None


def number_match(pred: str, refs: Sequence[str]) -> int:
    """1 iff the prediction's last number approximately equals a reference value.

    Values match when |p - r| < 0.005 under any of three alignments:
    p vs r, p/100 vs r, or p vs r/100 (percent-scale tolerance). The
    comparison runs in decimal arithmetic so the exclusive boundary is
    exact. A prediction with no number scores 0 rather than raising.
    """
    _require_refs(refs)
    pred_literal = _last_number_literal(pred)
    if pred_literal is None:
        return 0
    p = Decimal(pred_literal)
    for ref in refs:
        ref_literal = _last_number_literal(ref)
        if ref_literal is None:
            continue
        r = Decimal(ref_literal)
        for a, b in ((p, r), (p / 100, r), (p, r / 100)):
            if abs(a - b) < NUMBER_TOLERANCE:
                return 1
    return 0


def token_prf(pred: str, refs: Sequence[str]) -> tuple[float, float, float]:
    """(precision, recall, F1) over normalized token multisets, best-F1 reference."""
    _require_refs(refs)
    pred_tokens = _qa_tokens(pred)
    best = (0.0, 0.0, -1.0)
    for ref in refs:
        ref_tokens = _qa_tokens(ref)
        if not pred_tokens and not ref_tokens:
            candidate = (1.0, 1.0, 1.0)
        elif not pred_tokens or not ref_tokens:
            candidate = (0.0, 0.0, 0.0)
        else:
            overlap = sum((Counter(pred_tokens) & Counter(ref_tokens)).values())
            precision = overlap / len(pred_tokens)
            recall = overlap / len(ref_tokens)
            f1 = (
                2.0 * precision * recall / (precision + recall)
                if precision + recall > 0.0
                else 0.0
            )
            candidate = (precision, recall, f1)
        if candidate[2] > best[2]:
            best = candidate
    return best


def bleu(pred: str, refs: Sequence[str]) -> float:
    """Unsmoothed BLEU with n capped at the prediction length.

    Modified n-gram precision is clipped by the per-reference maximum
    counts; the geometric mean over n = 1..min(4, len(pred)) is zero if any
    used precision is zero. Brevity penalty uses the closest reference
    length (ties resolved toward the shorter reference).
    """
    _require_refs(refs)
    pred_tokens = _ngram_tokens(pred)
    ref_token_lists = [_ngram_tokens(r) for r in refs]
    c = len(pred_tokens)
    if c == 0:
        return 1.0 if any(len(r) == 0 for r in ref_token_lists) else 0.0
    max_n = min(4, c)
    log_sum = 0.0
    for n in range(1, max_n + 1):
        pred_grams = _ngrams(pred_tokens, n)
        clip: Counter = Counter()
        for ref_tokens in ref_token_lists:
            ref_grams = _ngrams(ref_tokens, n)
            for gram in pred_grams:
                clip[gram] = max(clip[gram], ref_grams.get(gram, 0))
        numer = sum(min(count, clip[gram]) for gram, count in pred_grams.items())
        denom = sum(pred_grams.values())
        if numer == 0:
            return 0.0
        log_sum += math.log(numer / denom)
    ref_len = min((len(r) for r in ref_token_lists), key=lambda L: (abs(L - c), L))
    brevity = 1.0 if c >= ref_len else math.exp(1.0 - ref_len / c)
    return brevity * math.exp(log_sum / max_n)


def _ngram_f1(pred_tokens: Sequence[str], ref_tokens: Sequence[str], n: int) -> float:
    pred_grams = _ngrams(pred_tokens, n)
    ref_grams = _ngrams(ref_tokens, n)
    total_pred = sum(pred_grams.values())
    total_ref = sum(ref_grams.values())
    if total_pred == 0 and total_ref == 0:
        return 1.0
    if total_pred == 0 or total_ref == 0:
        return 0.0
    overlap = sum((pred_grams & ref_grams).values())
    if overlap == 0:
        return 0.0
    precision = overlap / total_pred
    recall = overlap / total_ref
    return 2.0 * precision * recall / (precision + recall)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for tok_a in a:
        cur = [0] * (len(b) + 1)
        for j, tok_b in enumerate(b, start=1):
            cur[j] = prev[j - 1] + 1 if tok_a == tok_b else max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def _lcs_f1(pred_tokens: Sequence[str], ref_tokens: Sequence[str]) -> float:
    if not pred_tokens and not ref_tokens:
        return 1.0
    if not pred_tokens or not ref_tokens:
        return 0.0
    lcs = _lcs_length(pred_tokens, ref_tokens)
    if lcs == 0:
        return 0.0
    precision = lcs / len(pred_tokens)
    recall = lcs / len(ref_tokens)
    return 2.0 * precision * recall / (precision + recall)


def rouge(pred: str, refs: Sequence[str]) -> dict[str, float]:
    """ROUGE-1/2 F1 over n-gram overlap and ROUGE-L F1 from LCS length."""
    _require_refs(refs)
    pred_tokens = _ngram_tokens(pred)
    scores = {"rouge1": 0.0, "rouge2": 0.0, "rougeL": 0.0}
    for ref in refs:
        ref_tokens = _ngram_tokens(ref)
        scores["rouge1"] = max(scores["rouge1"], _ngram_f1(pred_tokens, ref_tokens, 1))
        scores["rouge2"] = max(scores["rouge2"], _ngram_f1(pred_tokens, ref_tokens, 2))
        scores["rougeL"] = max(scores["rougeL"], _lcs_f1(pred_tokens, ref_tokens))
    return scores


def gleu(pred: str, refs: Sequence[str]) -> float:
    """Sentence GLEU: min(precision, recall) over n-grams n = 1..4 pooled together."""
    _require_refs(refs)
    pred_tokens = _ngram_tokens(pred)
    pred_pool: Counter = Counter()
    for n in range(1, 5):
        pred_pool.update(_ngrams(pred_tokens, n))
    total_pred = sum(pred_pool.values())
    best = 0.0
    for ref in refs:
        ref_tokens = _ngram_tokens(ref)
        ref_pool: Counter = Counter()
        for n in range(1, 5):
            ref_pool.update(_ngrams(ref_tokens, n))
        total_ref = sum(ref_pool.values())
        if total_pred == 0 and total_ref == 0:
            best = max(best, 1.0)
            continue
        if total_pred == 0 or total_ref == 0:
            continue
        overlap = sum((pred_pool & ref_pool).values())
        best = max(best, min(overlap / total_pred, overlap / total_ref))
    return best


GENERATION_METRICS = (
    "exact_match",
    "number_match",
    "number_found",
    "token_precision",
    "token_recall",
    "token_f1",
    "bleu",
    "rouge1",
    "rouge2",
    "rougeL",
    "gleu",
)


def score_generation(pred: str, refs: Sequence[str], metrics: Iterable[str]) -> dict[str, float]:
    """Compute the selected generator metrics for one prediction.

    Selecting ``number_match`` also emits ``number_found`` (0/1) so that
    predictions without any extractable number stay distinguishable from
    genuine mismatches.
    """
    wanted = list(metrics)
    unknown = [m for m in wanted if m not in GENERATION_METRICS]
    if unknown:
        raise ValueError(f"unknown generator metrics: {unknown}")
    out: dict[str, float] = {}
    if "exact_match" in wanted:
        out["exact_match"] = float(exact_match(pred, refs))
    if "number_match" in wanted or "number_found" in wanted:
        out["number_match"] = float(number_match(pred, refs))
        out["number_found"] = float(last_number(pred) is not None)
    if any(m in wanted for m in ("token_precision", "token_recall", "token_f1")):
        precision, recall, f1 = token_prf(pred, refs)
        if "token_precision" in wanted:
            out["token_precision"] = precision
        if "token_recall" in wanted:
            out["token_recall"] = recall
        if "token_f1" in wanted:
            out["token_f1"] = f1
    if "bleu" in wanted:
        out["bleu"] = bleu(pred, refs)
    if any(m in wanted for m in ("rouge1", "rouge2", "rougeL")):
        rouge_scores = rouge(pred, refs)
        for name in ("rouge1", "rouge2", "rougeL"):
            if name in wanted:
                out[name] = rouge_scores[name]
    if "gleu" in wanted:
        out["gleu"] = gleu(pred, refs)
    return out


def _require_refs(refs: Sequence[str]) -> None:
    if not refs:
        raise ValueError("refs must be non-empty")
