from __future__ import annotations

import pytest

from ragbench.manifest import (
    Context,
    Document,
    LengthMismatchError,
    MetaData,
    Prompt,
    PromptCollection,
    QaRecord,
    TemplateSyntaxError,
    UnknownVariableError,
    build_prompt_collection,
    render_template,
    template_variables,
)

from conftest import make_doc, make_record


class TestRenderTemplate:
    def test_single_substitution(self):
        assert render_template("Q: {{ q }}", {"q": "hi"}) == "Q: hi"

    def test_no_markers_is_identity(self):
        text = "plain text, no markers } { at all"
        assert render_template(text, {"q": "unused"}) == text

    def test_loop_expansion_matches_hand_expansion(self):
        # Hand expansion per the grammar: body once per element, in order.
        docs = [make_doc("1", "a"), make_doc("2", "b")]
        out = render_template(
            "{% for d in docs %}[{{ d.text }}]{% endfor %}", {"docs": docs}
        )
        assert out == "[a][b]"

    def test_whitespace_variants_in_interpolation(self):
        assert render_template("{{q}}", {"q": "x"}) == "x"
        assert render_template("{{ q }}", {"q": "x"}) == "x"

    def test_field_access_id_and_text(self):
        doc = make_doc("d7", "body")
        assert render_template("{{ d.id }}:{{ d.text }}", {"d": doc}) == "d7:body"

    def test_field_access_on_mapping(self):
        assert render_template("{{ m.key }}", {"m": {"key": "v"}}) == "v"

    def test_nested_loops(self):
        out = render_template(
            "{% for a in xs %}{% for b in ys %}{{ a }}{{ b }};{% endfor %}{% endfor %}",
            {"xs": ["1", "2"], "ys": ["a", "b"]},
        )
        assert out == "1a;1b;2a;2b;"

    def test_loop_order_preserved(self):
        docs = [make_doc(str(i), f"t{i}") for i in (3, 1, 2)]
        out = render_template("{% for d in docs %}{{ d.id }}{% endfor %}", {"docs": docs})
        assert out == "312"

    def test_numeric_values_stringified(self):
        assert render_template("{{ n }}", {"n": 5}) == "5"

    def test_unbound_name_raises(self):
        with pytest.raises(UnknownVariableError):
            render_template("{{ missing }}", {"q": "x"})

    def test_unknown_field_raises(self):
        with pytest.raises(UnknownVariableError):
            render_template("{{ d.nope }}", {"d": make_doc("1", "a")})

    def test_unbound_loop_list_raises(self):
        with pytest.raises(UnknownVariableError):
            render_template("{% for d in docs %}x{% endfor %}", {})

    def test_unclosed_interpolation_raises(self):
        with pytest.raises(TemplateSyntaxError):
            render_template("{{ q", {"q": "x"})

    def test_for_without_endfor_raises(self):
        with pytest.raises(TemplateSyntaxError):
            render_template("{% for d in docs %}x", {"docs": []})

    def test_stray_endfor_raises(self):
        with pytest.raises(TemplateSyntaxError):
            render_template("x {% endfor %}", {})

    def test_malformed_block_tag_raises(self):
        with pytest.raises(TemplateSyntaxError):
            render_template("{% if x %}y{% endif %}", {"x": "1"})

    def test_loop_over_non_list_raises(self):
        with pytest.raises(TypeError):
            render_template("{% for d in docs %}x{% endfor %}", {"docs": "abc"})

    def test_rendering_is_pure(self):
        template = "{% for d in docs %}{{ d.text }}|{% endfor %}{{ q }}"
        bindings = {"docs": [make_doc("1", "a")], "q": "tail"}
        first = render_template(template, bindings)
        assert all(render_template(template, bindings) == first for _ in range(5))

    def test_template_variables_excludes_loop_locals(self):
        template = "{{ q }} {% for d in docs %}{{ d.text }}{% endfor %}"
        assert template_variables(template) == {"q", "docs"}


class TestTypes:
    def test_document_requires_text(self):
        with pytest.raises(ValueError):
            Document(id="d1", text="")

    def test_context_scores_must_be_parallel(self):
        with pytest.raises(ValueError):
            Context(documents=(make_doc("1", "a"),), scores=(0.5, 0.1))

    def test_context_rejects_duplicate_ids(self):
        with pytest.raises(ValueError):
            Context(documents=(make_doc("1", "a"), make_doc("1", "b")))

    def test_record_requires_answers_and_gold(self):
        with pytest.raises(ValueError):
            QaRecord(id="r", question="q", answers=(), gold_doc_ids=("d",))
        with pytest.raises(ValueError):
            QaRecord(id="r", question="q", answers=("a",), gold_doc_ids=())

    def test_metadata_rejects_bad_values(self):
        with pytest.raises(ValueError):
            MetaData({"key": ["list", "not", "allowed"]})
        with pytest.raises(ValueError):
            MetaData({"": "empty key"})

    def test_collection_rejects_duplicate_prompt_ids(self):
        prompt = Prompt(id="p1", system_message="s", user_message="u")
        with pytest.raises(ValueError):
            PromptCollection(prompts=(prompt, prompt), template_source="t")


class TestBuildPromptCollection:
    def test_empty_records_gives_empty_collection(self):
        collection = build_prompt_collection([], [], "{{ question }}", "sys")
        assert len(collection) == 0

    def test_documents_rendered_in_context_order(self):
        # Oracle: apply render_template by hand to the same bindings.
        record = make_record("r1", "why?")
        context = Context(documents=(make_doc("a", "first"), make_doc("b", "second")))
        template = "{% for d in documents %}<{{ d.text }}>{% endfor %}{{ question }}"
        collection = build_prompt_collection([record], [context], template, "sys")
        assert collection.prompts[0].user_message == "<first><second>why?"

    def test_record_meta_passes_through(self):
        record = QaRecord(
            id="r1",
            question="q",
            answers=("a",),
            gold_doc_ids=("d",),
            meta=MetaData({"dataset": "finqa"}),
        )
        collection = build_prompt_collection([record], [Context()], "{{ question }}", "s")
        assert collection.prompts[0].meta.get("dataset") == "finqa"

    def test_meta_carries_record_id_and_method(self):
        record = make_record("r9", "q")
        collection = build_prompt_collection(
            [record], [Context()], "{{ question }}", "s", method_name="base_rag"
        )
        meta = collection.prompts[0].meta
        assert meta.get("record_id") == "r9"
        assert meta.get("method") == "base_rag"

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatchError):
            build_prompt_collection([make_record("r", "q")], [], "{{ question }}", "s")

    def test_render_error_names_the_record(self):
        record = make_record("r42", "q")
        with pytest.raises(UnknownVariableError, match="r42"):
            build_prompt_collection([record], [Context()], "{{ nope }}", "s")

    def test_round_trip_traceability(self):
        records = [make_record(f"r{i}", f"q{i}") for i in range(4)]
        contexts = [Context()] * 4
        collection = build_prompt_collection(records, contexts, "{{ question }}", "s")
        by_id = {r.id: r for r in records}
        for prompt in collection:
            matches = [by_id[prompt.meta.get("record_id")]]
            assert len(matches) == 1
