import random

import pytest
from hypothesis import given, settings, strategies as st

from autoform.core import (AspectDescription, FormalizationRecord,
                           FormalLanguage, Formalization, InformalStatement,
                           Origin)
from autoform.errors import EmptyInput
from autoform.llm import GenerationParams, ScriptedBackend
from autoform.metrics import (bleu4, chrf, corpus_bleu4, edit_distance,
                              judge_aggregate, pass_rate, ruby,
                              ruby_operative_level, tokenize_formal)
from oracles import bleu4_bruteforce, chrf_bruteforce

tokens = st.lists(st.sampled_from("abcdefgh"), min_size=1, max_size=30)
texts = st.text(alphabet="abcxyz ()::=⇒", min_size=1, max_size=40)


class TestEditDistance:
    def test_strings_and_token_lists(self):
        assert edit_distance("kitten", "sitting") == 3
        assert edit_distance(["a", "b", "c"], ["a", "x", "c"]) == 1
        assert edit_distance([], ["a"]) == 1


class TestBleu4:
    def test_perfect_match_is_100(self):
        cand = "a b c d e".split()
        assert bleu4(cand, [cand]) == pytest.approx(100.0)

    def test_empty_candidate_is_0(self):
        assert bleu4([], [["a", "b"]]) == 0.0

    def test_agrees_with_oracle_on_worked_example(self):
        cand = "a b c d e".split()
        ref = "a b c d f".split()
        assert bleu4(cand, [ref]) == pytest.approx(
            bleu4_bruteforce(cand, [ref]), abs=1e-9)

    def test_oracle_equivalence_200_random_pairs(self):
        rng = random.Random(7)
        for _ in range(200):
            cand = rng.choices("abcdefgh", k=rng.randint(1, 30))
            refs = [rng.choices("abcdefgh", k=rng.randint(1, 30))
                    for _ in range(rng.randint(1, 3))]
            assert bleu4(cand, refs) == pytest.approx(
                bleu4_bruteforce(cand, refs), abs=1e-9)

    @given(tokens)
    def test_identity_scores_100(self, cand):
        assert bleu4(cand, [cand]) == pytest.approx(100.0)

    @given(tokens, tokens)
    def test_range(self, cand, ref):
        assert 0.0 <= bleu4(cand, [ref]) <= 100.0 + 1e-12

    def test_corpus_pooling_differs_from_mean(self):
        cands = [["a", "b", "c", "d"], ["x"]]
        refs = [[["a", "b", "c", "d"]], [["x", "y", "z", "w"]]]
        pooled = corpus_bleu4(cands, refs)
        assert 0.0 <= pooled <= 100.0


class TestChrf:
    def test_identical_is_100(self):
        assert chrf("lemma foo", "lemma foo") == pytest.approx(100.0)

    def test_disjoint_alphabets_is_0(self):
        assert chrf("abc", "xyz") == 0.0

    def test_empty_conventions(self):
        assert chrf("", "") == 100.0
        assert chrf("abc", "") == 0.0
        assert chrf("", "abc") == 0.0

    def test_agrees_with_oracle_on_worked_example(self):
        assert chrf("abcd", "abce") == pytest.approx(
            chrf_bruteforce("abcd", "abce"), abs=1e-9)

    def test_oracle_equivalence_200_random_pairs(self):
        rng = random.Random(11)
        alphabet = "abcdef gh"
        for _ in range(200):
            a = "".join(rng.choices(alphabet, k=rng.randint(1, 30)))
            b = "".join(rng.choices(alphabet, k=rng.randint(1, 30)))
            assert chrf(a, b) == pytest.approx(chrf_bruteforce(a, b),
                                               abs=1e-9)

    @given(texts)
    def test_identity_scores_100(self, text):
        assert chrf(text, text) == pytest.approx(100.0)

    @given(texts, texts)
    def test_range(self, a, b):
        assert 0.0 <= chrf(a, b) <= 100.0 + 1e-12


class TestRuby:
    def test_identical_is_100(self):
        assert ruby("lemma x: True", "lemma x: True") == pytest.approx(100.0)

    def test_hand_computed_token_edit_similarity(self):
        # token edit distance 1, max length 3 -> 66.67
        assert ruby("a b c", "a x c") == pytest.approx(100 * 2 / 3, abs=0.01)

    def test_one_empty_is_0(self):
        assert ruby("", "a b c") == 0.0
        assert ruby("", "") == 100.0

    @given(texts, texts)
    def test_range(self, a, b):
        assert 0.0 <= ruby(a, b) <= 100.0 + 1e-12

    def test_fallback_ordering_skips_lower_levels_on_success(self):
        calls = []

        def graph_level(c, r):
            calls.append("graph")
            return 55.0

        def string_level(c, r):
            calls.append("string")
            return 0.0

        chain = (("dependency_graph", graph_level),
                 ("string_edit", string_level))
        assert ruby("a", "b", chain=chain) == 55.0
        assert calls == ["graph"]

    def test_operative_level_is_string_edit_by_default(self):
        assert ruby_operative_level() == "string_edit"

    def test_tokenizer_spaces_operators(self):
        assert tokenize_formal('softmax::"real list⇒real list"') == \
            ["softmax", "::", '"', "real", "list", "⇒", "real", "list",
             '"']


class TestPassRate:
    def test_table_cell_arithmetic(self):
        outcomes = [True] * 160 + [False] * 84  # 160 of 244
        assert round(pass_rate(outcomes), 2) == 65.57

    def test_all_true_all_false(self):
        assert pass_rate([True] * 5) == 100.0
        assert pass_rate([False] * 5) == 0.0

    def test_empty_raises(self):
        with pytest.raises(EmptyInput):
            pass_rate([])

    @given(st.lists(st.booleans(), min_size=1, max_size=20),
           st.lists(st.booleans(), min_size=1, max_size=20))
    def test_concatenation_is_weighted_mean(self, a, b):
        lo = min(pass_rate(a), pass_rate(b))
        hi = max(pass_rate(a), pass_rate(b))
        assert lo - 1e-9 <= pass_rate(a + b) <= hi + 1e-9


def make_record(i, code="lemma x: True"):
    stmt = InformalStatement(id=f"s{i}", text=f"statement {i}")
    rec = FormalizationRecord(statement=stmt)
    rec.add_attempt(Formalization(code, FormalLanguage.ISABELLE_HOL,
                                  Origin.ZERO_SHOT))
    return rec


ASPECT = AspectDescription(name="AF", description="aligned?")
PARAMS = GenerationParams()


class TestJudgeAggregate:
    def test_all_true_is_100(self):
        records = [make_record(i) for i in range(4)]
        backend = ScriptedBackend(replies=["Judgement: True"] * 4)
        pct, verdicts, flagged = judge_aggregate(records, ASPECT, backend,
                                                 PARAMS)
        assert pct == 100.0
        assert flagged == []

    def test_alternating_is_50(self):
        records = [make_record(i) for i in range(4)]
        backend = ScriptedBackend(
            replies=["Judgement: True", "Judgement: False"] * 2)
        pct, _, _ = judge_aggregate(records, ASPECT, backend, PARAMS)
        assert pct == 50.0

    def test_unparseable_counts_false_and_flags(self):
        replies = (["Judgement: True"] * 5 + ["no verdict here"]
                   + ["Judgement: True"] * 3 + ["still nothing"])
        records = [make_record(i) for i in range(10)]
        pct, verdicts, flagged = judge_aggregate(
            records, ASPECT, ScriptedBackend(replies=replies), PARAMS)
        assert pct == pytest.approx(80.0)
        assert flagged == ["s5", "s9"]
        assert dict(verdicts)["s5"] is False
