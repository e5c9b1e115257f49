import pytest

from sciconcept.annotations import MalformedMarkup, ResponseFormat, parse_response
from sciconcept.prompting import (
    EmptyGold,
    FewShotExample,
    InsufficientExamples,
    PromptConfig,
    SurfaceMismatch,
    build_prompt,
    load_gold,
    load_gold_dir,
    parse_gold_text,
    select_examples,
    split_demo_dev,
)
from sciconcept.schema import default_schema

ATCA_GOLD = """#paper 0708.4073
We present an analysis of a new <dataset><instrument>Australia Telescope Compact Array (ATCA)</instrument> <modality>radio-continuum</modality> observation</dataset> of <object>supernova remnant (SNR) G1.9+0.3</object>, which at an <property>age</property> of ~181±25 years is the youngest known in the <object>Galaxy</object>.
"""

XO5B_SENTENCE = (
    "We present HATNet observations of XO-5b, confirming its planetary nature based on "
    "evidence beyond that described in the announcement of Burke et al."
)


class TestLoadGold:
    def test_atca_document_yields_six_extractions(self):
        paper = parse_gold_text(ATCA_GOLD)
        assert paper.paper_id == "0708.4073"
        assert len(paper.sentences) == 1
        _, extractions = paper.sentences[0]
        assert len(extractions) == 6

    def test_empty_document_raises(self):
        with pytest.raises(EmptyGold):
            parse_gold_text("")
        with pytest.raises(EmptyGold):
            parse_gold_text("#paper x\n")

    def test_markup_errors_carry_file_context(self, tmp_path):
        bad = tmp_path / "bad.txt"
        bad.write_text("#paper x\n<object>unclosed\n")
        with pytest.raises(MalformedMarkup) as err:
            load_gold([bad])
        assert "bad.txt" in str(err.value)

    def test_fixture_dir_loads_six_papers(self, gold_papers):
        assert len(gold_papers) == 6
        for paper in gold_papers:
            for sentence, extractions in paper.sentences:
                for extraction in extractions:
                    assert extraction.surface in sentence.text

    def test_surface_invariant_enforced(self):
        # constructed extraction sets always come from parse_tagged, so trip
        # the check via a crafted document with a surface that strips away
        with pytest.raises((SurfaceMismatch, MalformedMarkup)):
            parse_gold_text("#paper x\n<object> </object>\n")


class TestSplitDemoDev:
    def test_default_first_three(self, gold_papers):
        demo, dev = split_demo_dev(gold_papers)
        assert [p.paper_id for p in demo] == ["2401.00001", "2401.00002", "2401.00003"]
        assert len(dev) == 3
        assert {p.paper_id for p in demo}.isdisjoint({p.paper_id for p in dev})

    def test_explicit_ids(self, gold_papers):
        demo, dev = split_demo_dev(gold_papers, ["2401.00004", "2401.00006"])
        assert [p.paper_id for p in demo] == ["2401.00004", "2401.00006"]
        assert len(dev) == 4

    def test_twenty_paper_protocol(self, gold_papers):
        papers = (gold_papers * 4)[:20]
        seen = {}
        unique = []
        for i, paper in enumerate(papers):
            clone = type(paper)(paper_id=f"p{i}", sentences=paper.sentences)
            unique.append(clone)
        demo, dev = split_demo_dev(unique)
        assert len(demo) == 3 and len(dev) == 17


class TestSelectExamples:
    def test_three_by_three_gives_nine(self, gold_papers):
        config = PromptConfig(demo_paper_ids=("2401.00001", "2401.00002", "2401.00003"))
        examples = select_examples(gold_papers, config)
        assert len(examples) == 9

    def test_single_example(self, gold_papers):
        config = PromptConfig(demo_paper_ids=("2401.00001",), sentences_per_demo=1)
        examples = select_examples(gold_papers, config)
        assert len(examples) == 1
        assert examples[0].sentence_text == gold_papers[0].sentences[0][0].text

    def test_insufficient_examples(self, gold_papers):
        config = PromptConfig(demo_paper_ids=("2401.00001",), sentences_per_demo=99)
        with pytest.raises(InsufficientExamples):
            select_examples(gold_papers, config)

    def test_interleaved_order(self, gold_papers):
        config = PromptConfig(
            demo_paper_ids=("2401.00001", "2401.00002"),
            sentences_per_demo=2,
            example_order="interleaved",
        )
        examples = select_examples(gold_papers, config)
        texts = [e.sentence_text for e in examples]
        assert texts[0] == gold_papers[0].sentences[0][0].text
        assert texts[1] == gold_papers[1].sentences[0][0].text

    def test_stable_under_non_demo_reordering(self, gold_papers):
        config = PromptConfig(demo_paper_ids=("2401.00001", "2401.00002", "2401.00003"))
        shuffled = gold_papers[:3] + list(reversed(gold_papers[3:]))
        assert select_examples(gold_papers, config) == select_examples(shuffled, config)


class TestBuildPrompt:
    def test_layout_and_trailing_cue(self, gold_papers):
        config = PromptConfig(demo_paper_ids=("2401.00001", "2401.00002", "2401.00003"))
        examples = select_examples(gold_papers, config)
        prompt = build_prompt(default_schema(), examples, XO5B_SENTENCE, config)
        assert prompt.endswith(f"Sentence: {XO5B_SENTENCE}\nExtractions:")
        assert prompt.count("Extractions:") == len(examples) + 1
        assert prompt.startswith(config.instruction)
        assert "instrument: device or system used for making measurements" in prompt

    def test_zero_shot_degenerate(self):
        config = PromptConfig()
        prompt = build_prompt(default_schema(), [], "Target sentence.", config)
        assert prompt.count("Sentence:") == 1
        assert prompt.endswith("Extractions:")

    def test_deterministic_bytes(self, gold_papers):
        config = PromptConfig(demo_paper_ids=("2401.00001",), sentences_per_demo=2)
        examples = select_examples(gold_papers, config)
        first = build_prompt(default_schema(), examples, "Target.", config)
        second = build_prompt(default_schema(), examples, "Target.", config)
        assert first == second

    def test_rejects_empty_target(self):
        with pytest.raises(ValueError):
            build_prompt(default_schema(), [], "   ", PromptConfig())

    @pytest.mark.parametrize("fmt", list(ResponseFormat))
    def test_examples_parse_back_to_their_targets(self, gold_papers, fmt):
        config = PromptConfig(
            demo_paper_ids=("2401.00001", "2401.00002", "2401.00003"), format=fmt
        )
        examples = select_examples(gold_papers, config)
        prompt = build_prompt(default_schema(), examples, "Target.", config)
        for example in examples:
            assert example.sentence_text in prompt
            rendered_block = prompt.split(f"Sentence: {example.sentence_text}\nExtractions:\n")[1]
            rendered = rendered_block.split("\n\n")[0]
            parsed, _ = parse_response(rendered, fmt)
            assert parsed == example.target
