from __future__ import annotations

import math
import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ragbench.metrics import (
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

# ---------------------------------------------------------------------------
# Independent oracles, coded straight from the metric definitions. They share
# no code with the implementations under test.
# ---------------------------------------------------------------------------


def _grams(tokens, n):
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


def oracle_bleu(pred: str, ref: str) -> float:
    """Papineni BLEU, single reference: clipped modified precision, geometric
    mean over n = 1..min(4, len(pred)), brevity penalty exp(1 - r/c)."""
    cand = pred.lower().split()
    refs = ref.lower().split()
    c, r = len(cand), len(refs)
    if c == 0:
        return 1.0 if r == 0 else 0.0
    max_n = min(4, c)
    precisions = []
    for n in range(1, max_n + 1):
        cand_grams = _grams(cand, n)
        ref_counts = Counter(_grams(refs, n))
        clipped = 0
        for gram, count in Counter(cand_grams).items():
            clipped += min(count, ref_counts.get(gram, 0))
        precisions.append(clipped / len(cand_grams) if cand_grams else 0.0)
    if any(p == 0.0 for p in precisions):
        return 0.0
    geo = math.exp(sum(math.log(p) for p in precisions) / max_n)
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    return bp * geo


def oracle_rouge_n(pred: str, ref: str, n: int) -> float:
    cand = Counter(_grams(pred.lower().split(), n))
    refs = Counter(_grams(ref.lower().split(), n))
    total_c, total_r = sum(cand.values()), sum(refs.values())
    if total_c == 0 and total_r == 0:
        return 1.0
    if total_c == 0 or total_r == 0:
        return 0.0
    overlap = sum(min(count, refs.get(g, 0)) for g, count in cand.items())
    if overlap == 0:
        return 0.0
    p, r = overlap / total_c, overlap / total_r
    return 2 * p * r / (p + r)


def oracle_rouge_l(pred: str, ref: str) -> float:
    a, b = pred.lower().split(), ref.lower().split()
    if not a and not b:
        return 1.0
    if not a or not b:
        return 0.0
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                table[i][j] = table[i - 1][j - 1] + 1
            else:
                table[i][j] = max(table[i - 1][j], table[i][j - 1])
    lcs = table[-1][-1]
    if lcs == 0:
        return 0.0
    p, r = lcs / len(a), lcs / len(b)
    return 2 * p * r / (p + r)


def oracle_gleu(pred: str, ref: str) -> float:
    cand = pred.lower().split()
    refs = ref.lower().split()
    cand_pool = Counter(g for n in range(1, 5) for g in _grams(cand, n))
    ref_pool = Counter(g for n in range(1, 5) for g in _grams(refs, n))
    total_c, total_r = sum(cand_pool.values()), sum(ref_pool.values())
    if total_c == 0 and total_r == 0:
        return 1.0
    if total_c == 0 or total_r == 0:
        return 0.0
    overlap = sum(min(count, ref_pool.get(g, 0)) for g, count in cand_pool.items())
    return min(overlap / total_c, overlap / total_r)


def oracle_f1(pred: str, ref: str) -> float:
    a = normalize_answer(pred).split()
    b = normalize_answer(ref).split()
    if not a and not b:
        return 1.0
    if not a or not b:
        return 0.0
    overlap = sum((Counter(a) & Counter(b)).values())
    if overlap == 0:
        return 0.0
    p, r = overlap / len(a), overlap / len(b)
    return 2 * p * r / (p + r)


VOCAB = ["the", "cat", "sat", "on", "mat", "dog", "ran", "fast", "blue", "sky"]


def random_sentence(rng: random.Random, max_len: int = 8) -> str:
    return " ".join(rng.choices(VOCAB, k=rng.randint(1, max_len)))


class TestExactMatch:
    def test_normalization_strips_articles_case_punctuation(self):
        # Hand application of the normalization chain: "The Cat." -> "cat".
        assert exact_match("The Cat.", ["cat"]) == 1

    def test_identity(self):
        assert exact_match("cat", ["cat"]) == 1

    def test_mismatch(self):
        assert exact_match("cat", ["dog"]) == 0

    def test_multi_reference(self):
        assert exact_match("cat", ["dog", "cat"]) == 1


class TestNumberMatch:
    def test_percent_suffix_matches_raw(self):
        assert number_match("The ratio is 72.9%", ["72.9"]) == 1

    def test_percent_scale_alignment(self):
        assert number_match("0.729", ["72.9"]) == 1

    def test_outside_tolerance(self):
        assert number_match("73.5", ["72.9"]) == 0

    def test_boundary_is_exclusive(self):
        # |delta| exactly 0.005 must NOT match; strictly inside must.
        assert number_match("72.905", ["72.9"]) == 0
        assert number_match("72.9049", ["72.9"]) == 1

    def test_last_number_is_extracted(self):
        assert last_number("rose from 10.2 to 25.5 points") == 25.5

    def test_thousands_separators(self):
        assert last_number("total of 1,234,567 units") == 1234567.0
        assert number_match("1,234", ["1234"]) == 1

    def test_negative_numbers(self):
        assert number_match("change of -5.25", ["-5.25"]) == 1

    def test_no_number_scores_zero(self):
        assert last_number("no digits here") is None
        assert number_match("no digits here", ["72.9"]) == 0

    def test_reverse_percent_alignment(self):
        assert number_match("72.9", ["0.729"]) == 1


class TestTokenPrf:
    def test_hand_counts(self):
        p, r, f1 = token_prf("the cat sat", ["the cat"])
        # Normalization drops "the": pred {cat, sat}, ref {cat}.
        assert (p, r, f1) == (0.5, 1.0, pytest.approx(2 / 3))

    def test_hand_counts_without_articles(self):
        p, r, f1 = token_prf("big cat sat", ["big cat"])
        assert (p, r, f1) == (pytest.approx(2 / 3), 1.0, pytest.approx(0.8))

    def test_identity(self):
        assert token_prf("a b c", ["a b c"]) == (1.0, 1.0, 1.0)

    def test_disjoint(self):
        assert token_prf("cat", ["dog"]) == (0.0, 0.0, 0.0)

    def test_multiset_semantics(self):
        p, r, f1 = token_prf("cat cat", ["cat"])
        assert p == 0.5 and r == 1.0

    def test_best_reference_chosen(self):
        _, _, f1 = token_prf("cat sat", ["dog", "cat sat"])
        assert f1 == 1.0

    def test_matches_oracle_on_random_pairs(self):
        rng = random.Random(23)
        for _ in range(100):
            pred, ref = random_sentence(rng), random_sentence(rng)
            assert token_prf(pred, [ref])[2] == pytest.approx(
                oracle_f1(pred, ref), abs=1e-12
            )


class TestBleu:
    def test_identity_of_four_tokens(self):
        assert bleu("one two three four", ["one two three four"]) == 1.0

    def test_clipping_forces_zero_on_degenerate_prediction(self):
        # Unigram precision clips to 1/4; bigram "the the" never appears in
        # the reference, so an unsmoothed higher-order zero kills the score.
        assert bleu("the the the the", ["the cat"]) == 0.0

    def test_all_orders_nonzero_hand_value(self):
        # p1=4/5, p2=3/4, p3=2/3, p4=1/2; c=5 > r=4 so BP=1.
        expected = (4 / 5 * 3 / 4 * 2 / 3 * 1 / 2) ** 0.25
        assert bleu("a b c d e", ["a b c d"]) == pytest.approx(expected, rel=1e-12)

    def test_brevity_penalty(self):
        # All precisions 1; c=4 < r=5 gives BP = exp(1 - 5/4).
        assert bleu("a b c d", ["a b c d e"]) == pytest.approx(
            math.exp(1 - 5 / 4), rel=1e-12
        )

    def test_n_capped_at_prediction_length(self):
        assert bleu("a b", ["a b"]) == 1.0

    def test_matches_independent_oracle(self):
        rng = random.Random(17)
        for _ in range(50):
            pred, ref = random_sentence(rng), random_sentence(rng)
            assert bleu(pred, [ref]) == pytest.approx(oracle_bleu(pred, ref), abs=1e-9)


class TestRouge:
    def test_identity(self):
        scores = rouge("a b c", ["a b c"])
        assert scores == {"rouge1": 1.0, "rouge2": 1.0, "rougeL": 1.0}

    def test_rouge_l_hand_value(self):
        # LCS("a b c", "a c") = 2 -> P=2/3, R=1, F=0.8.
        assert rouge("a b c", ["a c"])["rougeL"] == pytest.approx(0.8)

    def test_rouge2_hand_value(self):
        # pred bigrams {ab, bc}, ref {ab}: P=1/2, R=1 -> F=2/3.
        assert rouge("a b c", ["a b"])["rouge2"] == pytest.approx(2 / 3)

    def test_disjoint(self):
        scores = rouge("x y", ["p q"])
        assert scores == {"rouge1": 0.0, "rouge2": 0.0, "rougeL": 0.0}

    def test_matches_independent_oracle(self):
        rng = random.Random(29)
        for _ in range(50):
            pred, ref = random_sentence(rng), random_sentence(rng)
            got = rouge(pred, [ref])
            assert got["rouge1"] == pytest.approx(oracle_rouge_n(pred, ref, 1), abs=1e-9)
            assert got["rouge2"] == pytest.approx(oracle_rouge_n(pred, ref, 2), abs=1e-9)
            assert got["rougeL"] == pytest.approx(oracle_rouge_l(pred, ref), abs=1e-9)


class TestGleu:
    def test_identity(self):
        assert gleu("a b c", ["a b c"]) == 1.0

    def test_hand_pooled_value(self):
        # pred pool: {a, b, ab}; ref pool: {a, c, ac}; overlap = {a} -> 1/3.
        assert gleu("a b", ["a c"]) == pytest.approx(1 / 3)

    def test_empty_overlap(self):
        assert gleu("x y", ["p q"]) == 0.0

    def test_matches_independent_oracle(self):
        rng = random.Random(31)
        for _ in range(50):
            pred, ref = random_sentence(rng), random_sentence(rng)
            assert gleu(pred, [ref]) == pytest.approx(oracle_gleu(pred, ref), abs=1e-9)


ALL_SCALAR_METRICS = (
    lambda p, r: float(exact_match(p, r)),
    lambda p, r: float(number_match(p, r)),
    lambda p, r: token_prf(p, r)[2],
    bleu,
    lambda p, r: rouge(p, r)["rouge1"],
    lambda p, r: rouge(p, r)["rouge2"],
    lambda p, r: rouge(p, r)["rougeL"],
    gleu,
)


class TestProperties:
    @settings(max_examples=150, deadline=None)
    @given(st.text(max_size=40), st.lists(st.text(max_size=40), min_size=1, max_size=3))
    def test_range_on_arbitrary_text(self, pred, refs):
        for metric in ALL_SCALAR_METRICS:
            value = metric(pred, refs)
            assert 0.0 <= value <= 1.0

    @settings(max_examples=100, deadline=None)
    @given(st.text(max_size=40))
    def test_identity_scores_maximum(self, text):
        assert exact_match(text, [text]) == 1
        assert token_prf(text, [text])[2] == 1.0
        assert bleu(text, [text]) == 1.0
        assert rouge(text, [text]) == {"rouge1": 1.0, "rouge2": 1.0, "rougeL": 1.0}
        assert gleu(text, [text]) == 1.0

    def test_adding_a_reference_never_decreases_scores(self):
        rng = random.Random(37)
        for _ in range(100):
            pred = random_sentence(rng)
            refs = [random_sentence(rng)]
            before = [metric(pred, refs) for metric in ALL_SCALAR_METRICS]
            refs.append(random_sentence(rng))
            after = [metric(pred, refs) for metric in ALL_SCALAR_METRICS]
            for b, a in zip(before, after):
                assert a >= b - 1e-12

    def test_exact_match_implies_f1_and_rouge_l(self):
        # Holds on article- and punctuation-free text, where the QA
        # normalization is the identity transform.
        rng = random.Random(41)
        clean_vocab = ["cat", "sat", "mat", "dog", "ran", "fast"]
        hits = 0
        for _ in range(300):
            pred = " ".join(rng.choices(clean_vocab, k=rng.randint(1, 5)))
            ref = " ".join(rng.choices(clean_vocab, k=rng.randint(1, 5)))
            if exact_match(pred, [ref]) == 1:
                hits += 1
                assert token_prf(pred, [ref])[2] == 1.0
                assert rouge(pred, [ref])["rougeL"] == 1.0
        assert hits > 0


class TestScoreGeneration:
    def test_selected_metrics_only(self):
        scores = score_generation("cat", ["cat"], ["exact_match", "token_f1"])
        assert set(scores) == {"exact_match", "token_f1"}

    def test_number_match_emits_found_flag(self):
        scores = score_generation("no digits", ["72.9"], ["number_match"])
        assert scores == {"number_match": 0.0, "number_found": 0.0}
        scores = score_generation("value 72.9", ["72.9"], ["number_match"])
        assert scores == {"number_match": 1.0, "number_found": 1.0}

    def test_unknown_metric_rejected(self):
        with pytest.raises(ValueError):
            score_generation("x", ["x"], ["nope"])

    def test_all_values_in_unit_interval(self):
        rng = random.Random(43)
        names = [
            "exact_match",
            "number_match",
            "token_precision",
            "token_recall",
            "token_f1",
            "bleu",
            "rouge1",
            "rouge2",
            "rougeL",
            "gleu",
        ]
        for _ in range(50):
            scores = score_generation(
                random_sentence(rng), [random_sentence(rng)], names
            )
            assert all(0.0 <= v <= 1.0 for v in scores.values())
