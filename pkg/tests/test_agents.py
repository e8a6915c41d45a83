import pytest

from fixtures_denoise import PUBLISHED_FIXTURES, SYNTHETIC_FIXTURES

from autoform.agents import (ASPECT_AF, ASPECT_FC, DEFAULT_IMPORT_LEXICON,
                             autoformalize, denoise, formal_refine,
                             hard_critique, informal_refine, load_template,
                             parse_judgment, render_exemplars,
                             repair_import_token, retrieve_imports,
                             soft_critique)
from autoform.core import (ExemplarPair, FormalLanguage, Formalization,
                           InformalStatement, Origin)
from autoform.errors import EmptyGeneration, JudgmentUnparseable
from autoform.kb import build_index, load_kb
from autoform.llm import GenerationParams, ScriptedBackend
from autoform.provers import Diagnostic, MockProver, Severity

ISA = FormalLanguage.ISABELLE_HOL
PARAMS = GenerationParams()
STMT = InformalStatement(id="s1", text="The sum of two even numbers is even.")


def formalization(code, origin=Origin.ZERO_SHOT, language=ISA, parent=None):
    return Formalization(code=code, language=language, origin=origin,
                         parent=parent)


def scripted(*replies):
    return ScriptedBackend(replies=list(replies))


class TestPromptRendering:
    def test_zero_shot_holes(self):
        assert load_template("zero_shot").holes() == {"informal",
                                                      "formal_language"}

    def test_unbound_hole_raises(self):
        with pytest.raises(KeyError):
            load_template("zero_shot").render(informal="x")

    def test_exemplars_render_in_order_before_query(self):
        exemplars = [
            ExemplarPair(informal=f"statement {i}",
                         formal=f"lemma l{i}: True", language=ISA)
            for i in range(3)
        ]
        backend = scripted("```isabelle\nlemma out: True\n```")
        autoformalize(STMT, exemplars, ISA, backend, PARAMS)
        user = backend.exchanges[0].messages[-1].content
        positions = [user.index(f"statement {i}") for i in range(3)]
        assert positions == sorted(positions)
        assert positions[-1] < user.index(STMT.text)

    def test_judge_template_mentions_aspect(self):
        backend = scripted("Judgement: True")
        soft_critique(STMT, formalization("lemma l: True"), ASPECT_AF,
                      backend, PARAMS)
        user = backend.exchanges[0].messages[-1].content
        assert ASPECT_AF.description in user

    def test_formal_refine_prompt_contains_error_details(self):
        backend = scripted("```isabelle\nlemma fixed: True\n```")
        formal_refine(STMT, formalization("lemma l: broken"),
                      'Undefined type name: "real"', backend, PARAMS)
        user = backend.exchanges[0].messages[-1].content
        assert 'Undefined type name: "real"' in user
        assert "lemma l: broken" in user


class TestAutoformalize:
    def test_zero_shot_origin_and_lineage(self):
        backend = scripted("```isabelle\nlemma l: True\n```")
        out = autoformalize(STMT, [], ISA, backend, PARAMS)
        assert out.origin is Origin.ZERO_SHOT
        assert out.parent is None
        assert out.code == "lemma l: True"

    def test_few_shot_origin(self):
        pair = ExemplarPair(informal="x", formal="lemma e: True",
                            language=ISA)
        backend = scripted("lemma l: True")
        out = autoformalize(STMT, [pair], ISA, backend, PARAMS)
        assert out.origin is Origin.FEW_SHOT

    def test_exemplar_language_mismatch(self):
        pair = ExemplarPair(informal="x", formal="theorem e : True := trivial",
                            language=FormalLanguage.LEAN4)
        with pytest.raises(ValueError):
            autoformalize(STMT, [pair], ISA, scripted("x"), PARAMS)

    def test_empty_generation(self):
        with pytest.raises(EmptyGeneration):
            autoformalize(STMT, [], ISA, scripted("   \n  "), PARAMS)


class TestJudgmentGrammar:
    @pytest.mark.parametrize("label", ["Judgement", "Judgment", "Verdict",
                                       "judgement", "JUDGMENT", "verdict"])
    @pytest.mark.parametrize("token,expected", [
        ("True", True), ("true", True), ("Yes", True), ("YES", True),
        ("False", False), ("false", False), ("No", False), ("no", False),
    ])
    def test_all_label_token_variants(self, label, token, expected):
        verdict, _ = parse_judgment(f"Explanation: because.\n{label}: {token}")
        assert verdict is expected

    def test_last_judgment_wins(self):
        verdict, _ = parse_judgment("Judgement: True\n...\nJudgement: False")
        assert verdict is False

    def test_markdown_bold_tolerated(self):
        verdict, _ = parse_judgment("**Judgement:** **True**")
        assert verdict is True

    def test_explanation_extracted(self):
        verdict, explanation = parse_judgment(
            "Explanation: bad.\nJudgement: False")
        assert verdict is False
        assert explanation == "bad."

    @pytest.mark.parametrize("reply", [
        "", "I think it is correct.", "Judgement: maybe",
        "Judgement:", "The verdict is unclear"])
    def test_unparseable_raises(self, reply):
        with pytest.raises(JudgmentUnparseable):
            parse_judgment(reply)


class TestSoftCritique:
    def test_false_verdict_with_detail(self):
        backend = scripted("Explanation: bad.\nJudgement: False")
        result = soft_critique(STMT, formalization("lemma l: True"),
                               ASPECT_AF, backend, PARAMS)
        assert result.verdict is False
        assert result.detail == "bad."
        assert result.aspect is ASPECT_AF

    def test_true_verdict(self):
        backend = scripted("Explanation: matches.\nJudgement: True")
        result = soft_critique(STMT, formalization("lemma l: True"),
                               ASPECT_FC, backend, PARAMS)
        assert result.verdict is True


class TestHardCritique:
    def rules(self):
        return [
            ("HOL.Complex",
             [Diagnostic(Severity.ERROR,
                         "Inner syntax error Failed to parse prop")]),
            ("real",
             [Diagnostic(Severity.ERROR,
                         'Undefined type name: "real" Failed to parse type')]),
        ]

    def test_undefined_type_failure(self):
        prover = MockProver(rules=self.rules())
        body = 'definition f :: "real list" where "f = []"'
        result = hard_critique(formalization(body), prover,
                               theory_name="Softmax")
        assert result.verdict is False
        assert 'Undefined type name: "real"' in result.detail

    def test_first_rule_shadows_second(self):
        prover = MockProver(rules=self.rules())
        code = ('theory Softmax imports Main "HOL.Complex" begin\n'
                'definition f :: "real list" where "f = []"\nend')
        result = hard_critique(formalization(code), prover)
        assert result.verdict is False
        assert "Inner syntax error" in result.detail

    def test_pass(self):
        result = hard_critique(formalization("lemma l: True"), MockProver())
        assert result.verdict is True
        assert not result.timed_out

    def test_timeout_is_a_false_verdict(self):
        result = hard_critique(formalization("lemma MOCK_TIMEOUT: True"),
                               MockProver())
        assert result.verdict is False
        assert result.timed_out
        assert result.detail == "timeout"


class TestRefinement:
    def test_formal_refine_lineage(self):
        src = formalization("lemma l: broken")
        out = formal_refine(STMT, src, "some error",
                            scripted("lemma l: True"), PARAMS)
        assert out.origin is Origin.FORMAL_REFINEMENT
        assert out.parent is src
        assert out.lineage() == [out, src]

    def test_formal_refine_requires_error_text_on_failure(self):
        with pytest.raises(ValueError):
            formal_refine(STMT, formalization("x"), "", scripted("y"),
                          PARAMS, correctness=False)

    def test_informal_refine_lineage(self):
        src = formalization("lemma l: misaligned")
        out = informal_refine(STMT, src, ASPECT_AF, "misses the evenness "
                              "hypothesis", scripted("lemma l: True"), PARAMS)
        assert out.origin is Origin.INFORMAL_REFINEMENT
        assert out.parent is src

    def test_informal_refine_requires_evaluation(self):
        with pytest.raises(ValueError):
            informal_refine(STMT, formalization("x"), ASPECT_AF, "  ",
                            scripted("y"), PARAMS)


class TestImportRepair:
    def test_published_truncation(self):
        assert repair_import_token("Complex_Mai",
                                   DEFAULT_IMPORT_LEXICON) == "Complex_Main"

    def test_exact_match_untouched(self):
        assert repair_import_token("Main", DEFAULT_IMPORT_LEXICON) == "Main"

    def test_distant_token_untouched(self):
        assert repair_import_token("Zzzzz",
                                   DEFAULT_IMPORT_LEXICON) == "Zzzzz"

    def test_ambiguous_token_untouched(self):
        lexicon = ("Foo_A", "Foo_B")
        assert repair_import_token("Foo_", lexicon) == "Foo_"


def fixture_language(name):
    return FormalLanguage.LEAN4 if name.startswith("lean_") else ISA


class TestDenoise:
    @pytest.mark.parametrize("name,theory,noisy,expected", PUBLISHED_FIXTURES,
                             ids=[f[0] for f in PUBLISHED_FIXTURES])
    def test_published_examples_verbatim(self, name, theory, noisy, expected):
        out = denoise(formalization(noisy), theory_name=theory)
        assert out.code == expected

    @pytest.mark.parametrize(
        "name,theory,noisy",
        [(n, t, x) for n, t, x, _ in PUBLISHED_FIXTURES]
        + list(SYNTHETIC_FIXTURES),
        ids=[f[0] for f in PUBLISHED_FIXTURES] + [f[0] for f in
                                              SYNTHETIC_FIXTURES])
    def test_idempotent_over_corpus(self, name, theory, noisy):
        lang = fixture_language(name)
        once = denoise(formalization(noisy, language=lang),
                       theory_name=theory)
        twice = denoise(once, theory_name=theory)
        assert twice.code == once.code

    def test_total_on_garbage(self):
        out = denoise(formalization("%%% not isabelle at all %%%"))
        assert isinstance(out.code, str)

    def test_lineage(self):
        src = formalization("lemma l: True")
        out = denoise(src)
        assert out.origin is Origin.DENOISED
        assert out.parent is src

    def test_clean_theory_body_unchanged(self):
        code = ('theory Scratch imports Main\nbegin\n'
                'lemma l: "1 + 1 = (2::nat)"\n  by simp\nend')
        out = denoise(formalization(code))
        assert out.code == code


@pytest.fixture(scope="module")
def demo_kb():
    from importlib import resources
    path = resources.files("autoform") / "data" / "demo_kb.jsonl"
    records = load_kb(path)
    return records, build_index(records)


class TestRetrieveImports:
    def softmax(self):
        return formalization(
            'definition softmax :: "real list \\<Rightarrow> real list" '
            'where\n  "softmax z = map (\\<lambda>zi. exp zi / '
            'sum_list (map exp z)) z"')

    def test_softmax_pulls_complex_import(self, demo_kb):
        records, index = demo_kb
        out = retrieve_imports(
            self.softmax(), index, records, top_n=1,
            diagnostics_text='Undefined type name: "real" Failed to parse '
                             'type', theory_name="Softmax")
        assert out.origin is Origin.IMPORT_RETRIEVAL
        assert '"HOL.Complex"' in out.code.splitlines()[0]

    def test_existing_imports_never_removed(self, demo_kb):
        records, index = demo_kb
        code = ('theory Softmax imports Main "HOL.Algebra" begin\n'
                'definition f :: "real \\<Rightarrow> real" where "f x = x"\n'
                'end')
        out = retrieve_imports(formalization(code), index, records, top_n=2,
                               theory_name="Softmax")
        header = out.code.splitlines()[0]
        assert "Main" in header and '"HOL.Algebra"' in header

    def test_no_match_keeps_defaults_only(self, demo_kb):
        records, index = demo_kb
        out = retrieve_imports(
            formalization("lemma zzqq: xyzzyplugh"), index, records,
            top_n=3)
        header = out.code.splitlines()[0]
        assert header.startswith("theory Scratch imports Main")

    def test_top_n_union_is_deduplicated(self):
        from autoform.kb import KbRecord

        def record(rid, text, statement, imports):
            return KbRecord.from_dict({
                "id": rid, "type": "lemma", "text": text,
                "statement": statement, "assumes": "", "proof": "",
                "using": [], "abs_imports": list(imports), "source": f"s{rid}"})

        records = [
            record(0, "prime factor theorem", "prime p", ("A", "B")),
            record(1, "prime gap bound", "prime q", ("B", "C")),
            record(2, "prime counting estimate", "prime r", ("A",)),
            record(3, "graph coloring lemma", "chromatic", ("G",)),
            record(4, "matrix rank identity", "rank", ("M",)),
        ]
        index = build_index(records)
        out = retrieve_imports(
            formalization('lemma l: "prime (7::nat)"'), index, records,
            top_n=3)
        tokens = out.code.splitlines()[0].split()
        # the three prime records win; their imports union to A, B, C
        for imp in ("A", "B", "C"):
            assert tokens.count(imp) == 1
        assert "G" not in tokens and "M" not in tokens

    def test_top_n_must_be_positive(self, demo_kb):
        records, index = demo_kb
        with pytest.raises(ValueError):
            retrieve_imports(formalization("lemma l: True"), index, records,
                             top_n=0)
