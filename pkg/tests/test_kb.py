import json
import random

import pytest

from autoform.errors import DuplicateId, ParseError
from autoform.kb import (Bm25Index, KbRecord, build_index, load_kb, query,
                         record_tokens, tokenize)
from oracles import bm25_scores_bruteforce

REFERENCE_RECORD = {
    "type": "definition",
    "text": "",
    "statement": "definition fFalse :: bool where\n\"fFalse \\<longleftrightarrow> False\"\n",
    "assumes": "",
    "proof": "",
    "using": [],
    "abs_imports": ["HOL.Meson", "HOL.Hilbert_Choice"],
    "source": "HOL.ATP",
    "id": 0,
}


def write_jsonl(path, objs):
    with open(path, "w", encoding="utf-8") as fh:
        for obj in objs:
            fh.write(json.dumps(obj) + "\n")


def make_record(i, statement, text="", source=""):
    return KbRecord(type="lemma", text=text, statement=statement, assumes="",
                    proof="", using=(), abs_imports=(), source=source, id=i)


class TestLoadKb:
    def test_single_record_file(self, tmp_path):
        path = tmp_path / "kb.jsonl"
        write_jsonl(path, [REFERENCE_RECORD])
        records = load_kb(path)
        assert len(records) == 1
        assert records[0].source == "HOL.ATP"
        assert records[0].id == 0
        assert records[0].abs_imports == ("HOL.Meson", "HOL.Hilbert_Choice")

    def test_empty_file(self, tmp_path):
        path = tmp_path / "kb.jsonl"
        path.write_text("")
        assert load_kb(path) == []

    def test_duplicate_id(self, tmp_path):
        path = tmp_path / "kb.jsonl"
        write_jsonl(path, [dict(REFERENCE_RECORD, id=7),
                           dict(REFERENCE_RECORD, id=7)])
        with pytest.raises(DuplicateId):
            load_kb(path)

    def test_malformed_line_reports_line_number(self, tmp_path):
        path = tmp_path / "kb.jsonl"
        path.write_text(json.dumps(REFERENCE_RECORD) + "\n{not json\n")
        with pytest.raises(ParseError) as err:
            load_kb(path)
        assert err.value.line == 2

    def test_json_array_accepted(self, tmp_path):
        path = tmp_path / "kb.json"
        path.write_text(json.dumps([REFERENCE_RECORD]))
        assert len(load_kb(path)) == 1

    def test_unknown_fields_round_trip(self, tmp_path):
        path = tmp_path / "kb.jsonl"
        write_jsonl(path, [dict(REFERENCE_RECORD, custom_tag="keep-me")])
        rec = load_kb(path)[0]
        assert rec.to_dict()["custom_tag"] == "keep-me"


class TestTokenizer:
    def test_dotted_identifier_splits(self):
        assert tokenize("HOL.Complex") == ["hol", "complex"]

    def test_underscores_split(self):
        assert tokenize("sum_exp_z") == ["sum", "exp", "z"]

    def test_same_path_for_index_and_query(self):
        # one shared tokenizer: queries see exactly the indexed tokens
        rec = make_record(0, "definition fFalse :: bool")
        assert record_tokens(rec) == tokenize(rec.statement + "  ")


class TestBuildIndex:
    def test_single_document_stats(self):
        rec = make_record(0, "definition fFalse :: bool")
        index = build_index([rec])
        assert index.avgdl == len(record_tokens(rec))
        assert len(index) == 1

    def test_df_matches_hand_count(self):
        records = [
            make_record(0, "lemma add_comm a b"),
            make_record(1, "lemma mul_comm a b"),
            make_record(2, "definition add_zero a"),
            make_record(3, "theorem comm of comm things"),
            make_record(4, "definition b only"),
        ]
        index = build_index(records)
        assert index.df["comm"] == 3
        assert index.df["a"] == 3
        assert index.df["b"] == 3
        assert index.df["lemma"] == 2
        assert index.df["only"] == 1

    def test_empty_index(self):
        index = build_index([])
        assert len(index) == 0
        assert query(index, "anything", 5) == []


class TestQuery:
    def test_unique_term_dominates(self):
        records = [make_record(i, f"lemma generic_{i} n") for i in range(9)]
        records.append(make_record(9, "lemma softmax_def special n"))
        index = build_index(records)
        ranked = query(index, "softmax", 3)
        assert ranked[0][0] == 9

    def test_no_overlap_yields_no_results(self):
        index = build_index([make_record(0, "lemma foo bar")])
        assert query(index, "nothing shared", 5) == []

    def test_ties_break_by_ascending_doc_id(self):
        records = [make_record(5, "lemma same text"),
                   make_record(2, "lemma same text"),
                   make_record(9, "lemma same text")]
        index = build_index(records)
        ranked = query(index, "same", 3)
        assert [doc_id for doc_id, _ in ranked] == [2, 5, 9]

    def test_rank_determinism(self):
        records = [make_record(i, f"lemma l{i} shared t{i % 3}")
                   for i in range(20)]
        index = build_index(records)
        first = query(index, "shared t1", 10)
        assert all(query(index, "shared t1", 10) == first for _ in range(5))


VOCAB = ("group", "ring", "field", "lemma", "nat", "real", "sum", "prod",
         "open", "closed", "limit", "deriv", "prime", "odd", "even", "abs")


def random_corpus(rng, n_docs):
    records = []
    for i in range(n_docs):
        words = rng.choices(VOCAB, k=rng.randint(3, 20))
        records.append(make_record(i, " ".join(words)))
    return records


class TestBruteForceEquivalence:
    def test_100_docs_50_queries(self):
        rng = random.Random(42)
        records = random_corpus(rng, 100)
        index = build_index(records)
        doc_tokens = [record_tokens(r) for r in records]
        for _ in range(50):
            q = " ".join(rng.choices(VOCAB, k=rng.randint(1, 5)))
            expected = bm25_scores_bruteforce(doc_tokens, tokenize(q))
            oracle = sorted(((i, s) for i, s in enumerate(expected) if s > 0),
                            key=lambda p: (-p[1], p[0]))[:10]
            got = query(index, q, 10)
            assert [d for d, _ in got] == [d for d, _ in oracle]
            for (_, a), (_, b) in zip(got, oracle):
                assert abs(a - b) < 1e-9

    def test_monotonicity_in_term_frequency(self):
        # one more occurrence of the query term (length held constant) never
        # lowers the score
        base = make_record(0, "alpha beta gamma delta")
        boosted = make_record(1, "alpha alpha gamma delta")
        index = build_index([base, boosted,
                             make_record(2, "unrelated words here now")])
        scores = dict(query(index, "alpha", 3))
        assert scores[1] >= scores[0]
