import json
import random
import string

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sciconcept.annotations import (
    Extraction,
    ExtractionSet,
    MalformedMarkup,
    NoParsableContent,
    ResponseFormat,
    TaggedSentence,
    UnrepresentableItem,
    insert_markup,
    parse_response,
    parse_tagged,
    render_extractions,
)
from sciconcept.schema import TagType, UnknownTag

ATCA_RAW = (
    "We present an analysis of a new <dataset><instrument>Australia Telescope Compact "
    "Array (ATCA)</instrument> <modality>radio-continuum</modality> observation</dataset> "
    "of <object>supernova remnant (SNR) G1.9+0.3</object>, which at an "
    "<property>age</property> of ~181±25 years is the youngest known in the "
    "<object>Galaxy</object>."
)
ATCA_PLAIN = (
    "We present an analysis of a new Australia Telescope Compact Array (ATCA) "
    "radio-continuum observation of supernova remnant (SNR) G1.9+0.3, which at an age "
    "of ~181±25 years is the youngest known in the Galaxy."
)
ATCA_EXPECTED = [
    (TagType.dataset, "Australia Telescope Compact Array (ATCA) radio-continuum observation"),
    (TagType.instrument, "Australia Telescope Compact Array (ATCA)"),
    (TagType.modality, "radio-continuum"),
    (TagType.object, "supernova remnant (SNR) G1.9+0.3"),
    (TagType.property, "age"),
    (TagType.object, "Galaxy"),
]


class TestParseTagged:
    def test_nested_markup_with_document_order(self):
        result = parse_tagged(ATCA_RAW)
        assert result.plain == ATCA_PLAIN
        assert [(e.tag, e.surface) for e in result.extractions] == ATCA_EXPECTED

    def test_untagged_text_passes_through(self):
        result = parse_tagged("no tags here")
        assert result.plain == "no tags here"
        assert len(result.extractions) == 0

    def test_duplicate_spans_dedup(self):
        result = parse_tagged("<object>A</object> and <object>A</object>")
        assert [(e.tag, e.surface) for e in result.extractions] == [(TagType.object, "A")]

    def test_case_folded_dedup_keeps_first_spelling(self):
        result = parse_tagged("<object>Galaxy</object> vs <object>galaxy</object>")
        assert [e.surface for e in result.extractions] == ["Galaxy"]

    def test_offset_fidelity(self):
        for raw in [
            ATCA_RAW,
            "<object>A</object><property>b</property>",
            "x <dataset>a <modality>b</modality> c</dataset> y",
        ]:
            parsed = parse_tagged(raw)
            assert insert_markup(parsed.plain, parsed.spans) == raw

    @pytest.mark.parametrize(
        "raw",
        [
            "<object>unclosed",
            "closed</object>",
            "<object>a<property>b</object>c</property>",
            "<object></object>",
            "<object>   </object>",
        ],
    )
    def test_malformed_markup(self, raw):
        with pytest.raises(MalformedMarkup):
            parse_tagged(raw)

    def test_unknown_tag_rejected(self):
        with pytest.raises(UnknownTag):
            parse_tagged("<galaxy>M31</galaxy>")
        with pytest.raises(UnknownTag):
            parse_tagged("<Object>M31</Object>")

    def test_bare_angle_brackets_are_text(self):
        result = parse_tagged("a < b and c > d")
        assert result.plain == "a < b and c > d"


class TestParseResponse:
    def test_human_readable_lines(self):
        text = "property: magnetic field strength, energy\nobject: synchrotron radiation"
        extractions, warnings = parse_response(text, ResponseFormat.human_readable)
        assert extractions == ExtractionSet(
            [
                Extraction(TagType.property, "magnetic field strength"),
                Extraction(TagType.property, "energy"),
                Extraction(TagType.object, "synchrotron radiation"),
            ]
        )
        assert warnings == []

    def test_json_object(self):
        text = '{"dataset": ["HATNet observations"], "object": ["XO-5b", "planetary nature"]}'
        extractions, warnings = parse_response(text, ResponseFormat.json)
        assert len(extractions) == 3
        assert warnings == []

    def test_json_tolerates_prose_and_fences(self):
        text = 'Sure! Here are the tags:\n```json\n{"object": ["quasar"]}\n```\nHope that helps.'
        extractions, _ = parse_response(text, ResponseFormat.json)
        assert [(e.tag, e.surface) for e in extractions] == [(TagType.object, "quasar")]

    def test_prose_reply_degrades_gracefully(self):
        extractions, warnings = parse_response(
            "I could not find any concepts.", ResponseFormat.human_readable
        )
        assert len(extractions) == 0
        assert len(warnings) == 1

    def test_strict_mode_raises_without_structure(self):
        with pytest.raises(NoParsableContent):
            parse_response("nothing here", ResponseFormat.human_readable, strict=True)
        # a recognized tag line with no items is structure, so strict passes
        extractions, _ = parse_response("object:", ResponseFormat.human_readable, strict=True)
        assert len(extractions) == 0

    def test_unknown_tags_and_empty_items_become_warnings(self):
        text = "object: quasar,, nebula\nspecies: finch\nmodality:"
        extractions, warnings = parse_response(text, ResponseFormat.human_readable)
        assert [(e.tag, e.surface) for e in extractions] == [
            (TagType.object, "quasar"),
            (TagType.object, "nebula"),
        ]
        assert any("empty item" in w for w in warnings)
        assert any("unknown tag" in w for w in warnings)
        assert any("no items" in w for w in warnings)

    def test_repeated_tag_lines_merge_with_dedup(self):
        text = "object: quasar\nobject: quasar, nebula"
        extractions, _ = parse_response(text, ResponseFormat.human_readable)
        assert [e.surface for e in extractions] == ["quasar", "nebula"]

    def test_parse_is_idempotent(self):
        text = "object: quasar\nproperty: redshift"
        first, _ = parse_response(text, ResponseFormat.human_readable)
        second, _ = parse_response(text, ResponseFormat.human_readable)
        assert first == second

    def test_json_newlines_in_surfaces_are_folded(self):
        text = '{"object": ["split\\nacross lines"]}'
        extractions, _ = parse_response(text, ResponseFormat.json)
        assert [e.surface for e in extractions] == ["split across lines"]


class TestRenderExtractions:
    def test_single_line(self):
        rendered = render_extractions(
            ExtractionSet([Extraction(TagType.property, "age")]), ResponseFormat.human_readable
        )
        assert rendered == "property: age"

    def test_ground_truth_block_layout(self):
        extractions = ExtractionSet(
            [
                Extraction(TagType.dataset, "HATNet observations"),
                Extraction(TagType.instrument, "HATNet"),
                Extraction(TagType.object, "XO-5b"),
            ]
        )
        rendered = render_extractions(extractions, ResponseFormat.human_readable)
        # canonical tag order puts object before instrument
        assert rendered == "dataset: HATNet observations\nobject: XO-5b\ninstrument: HATNet"
        parsed, _ = parse_response(rendered, ResponseFormat.human_readable)
        assert parsed == extractions

    def test_tags_appear_in_canonical_order(self):
        extractions = ExtractionSet(
            [
                Extraction(TagType.property, "a"),
                Extraction(TagType.object, "b"),
                Extraction(TagType.property, "c"),
            ]
        )
        rendered = render_extractions(extractions, ResponseFormat.human_readable)
        assert rendered == "object: b\nproperty: a, c"

    def test_comma_surface_unrepresentable_in_human_format(self):
        extractions = ExtractionSet([Extraction(TagType.object, "large, complex systems")])
        with pytest.raises(UnrepresentableItem):
            render_extractions(extractions, ResponseFormat.human_readable)
        rendered = render_extractions(extractions, ResponseFormat.json)
        assert json.loads(rendered) == {"object": ["large, complex systems"]}

    def test_json_single_line_in_canonical_order(self):
        extractions = ExtractionSet(
            [Extraction(TagType.property, "age"), Extraction(TagType.model, "MHD model")]
        )
        rendered = render_extractions(extractions, ResponseFormat.json)
        assert "\n" not in rendered
        assert rendered == '{"model": ["MHD model"], "property": ["age"]}'


SURFACE_ALPHABET = string.ascii_letters + string.digits + " -()+.±~'"


def surfaces():
    return (
        st.text(alphabet=SURFACE_ALPHABET, min_size=1, max_size=30)
        .map(str.strip)
        .filter(lambda s: s and "," not in s)
    )


def extraction_sets():
    return st.lists(
        st.tuples(st.sampled_from(list(TagType)), surfaces()), min_size=0, max_size=8
    ).map(lambda pairs: ExtractionSet(Extraction(t, s) for t, s in pairs))


@given(extraction_sets(), st.sampled_from(list(ResponseFormat)))
@settings(max_examples=200)
def test_round_trip_property(extractions, fmt):
    rendered = render_extractions(extractions, fmt)
    parsed, warnings = parse_response(rendered, fmt)
    assert parsed == extractions


@given(st.text(max_size=400))
@settings(max_examples=300)
def test_parse_response_never_raises(text):
    for fmt in ResponseFormat:
        extractions, warnings = parse_response(text, fmt)
        assert isinstance(extractions, ExtractionSet)
        assert isinstance(warnings, list)


def _random_nested_spans(rng, text_length):
    """Random properly-nested (never crossing) span set over [0, text_length)."""
    spans = []
    for _ in range(rng.randint(0, 6)):
        for _attempt in range(20):
            start = rng.randrange(0, text_length)
            end = rng.randrange(start + 1, text_length + 1)
            ok = True
            for existing in spans:
                disjoint = end <= existing.start or existing.end <= start
                nested = (existing.start <= start and end <= existing.end) or (
                    start <= existing.start and existing.end <= end
                )
                if not (disjoint or nested):
                    ok = False
                    break
            if ok:
                from sciconcept.annotations import TagSpan

                spans.append(TagSpan(rng.choice(list(TagType)), start, end))
                break
    # document open order: by start, outer (larger end) first at equal starts
    return sorted(spans, key=lambda span: (span.start, -span.end))


def test_markup_generation_round_trip_property():
    rng = random.Random(4242)
    for _ in range(300):
        words = ["".join(rng.choice(string.ascii_letters) for _ in range(rng.randint(1, 8)))
                 for _ in range(rng.randint(3, 12))]
        plain = " ".join(words)
        spans = [
            span
            for span in _random_nested_spans(rng, len(plain))
            if plain[span.start : span.end].strip()
        ]
        raw = insert_markup(plain, spans)
        parsed = parse_tagged(raw)
        assert parsed.plain == plain
        assert list(parsed.spans) == spans
        assert insert_markup(parsed.plain, parsed.spans) == raw


def test_extraction_validation():
    with pytest.raises(ValueError):
        Extraction(TagType.object, "   ")
    with pytest.raises(ValueError):
        Extraction(TagType.object, "two\nlines")
    assert Extraction(TagType.object, "  padded  ").surface == "padded"
    assert Extraction("object", "coerced").tag is TagType.object
